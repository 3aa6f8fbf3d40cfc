//! File formats shared by the CLI and the plotting scripts. Node labels are
//! 1-based in every file.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Station;
use crate::lds::TrajectoryPanel;

/// Writes `node,t,x1..xd`, one row per node and time index.
pub fn write_panel_csv<W: Write>(w: W, panel: &TrajectoryPanel) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["node".to_string(), "t".to_string()];
    header.extend((1..=panel.d).map(|i| format!("x{i}")));
    wr.write_record(&header)?;
    for (l, s) in panel.states.iter().enumerate() {
        for t in 0..s.ncols() {
            let mut rec = vec![(l + 1).to_string(), t.to_string()];
            rec.extend(s.column(t).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(r: R, path: &Path) -> Result<TrajectoryPanel> {
    let err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "node" || &headers[1] != "t" {
        return Err(err(1, "header must be node,t,x1..xd".into()));
    }
    let d = headers.len() - 2;
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h != format!("x{}", i + 1) {
            return Err(err(1, format!("unexpected column {h:?}")));
        }
    }
    let mut cols: Vec<Vec<(usize, Vec<f64>)>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let node: usize = rec[0].parse().map_err(|_| err(line, format!("bad node {:?}", &rec[0])))?;
        let t: usize = rec[1].parse().map_err(|_| err(line, format!("bad t {:?}", &rec[1])))?;
        if node == 0 {
            return Err(err(line, "node labels start at 1".into()));
        }
        let x: Vec<f64> = (0..d)
            .map(|i| rec[i + 2].parse::<f64>().map_err(|_| err(line, format!("bad value {:?}", &rec[i + 2]))))
            .collect::<Result<_>>()?;
        if cols.len() < node {
            cols.resize(node, Vec::new());
        }
        cols[node - 1].push((t, x));
    }
    let mut states = Vec::with_capacity(cols.len());
    for (l, mut c) in cols.into_iter().enumerate() {
        c.sort_by_key(|(t, _)| *t);
        if c.iter().enumerate().any(|(k, (t, _))| *t != k) {
            return Err(Error::Data(format!("{}: node {} does not have times 0..n", path.display(), l + 1)));
        }
        states.push(DMatrix::from_fn(d, c.len(), |i, t| c[t].1[i]));
    }
    TrajectoryPanel::new(d, states)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeValue {
    pub node: usize,
    pub value: f64,
}

/// `node,value` rows for node-colored maps.
pub fn write_node_values<W: Write>(w: W, values: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (l, &v) in values.iter().enumerate() {
        wr.serialize(NodeValue { node: l + 1, value: v })?;
    }
    wr.flush()?;
    Ok(())
}

/// `station_id,lat,lon` rows.
pub fn write_coords<W: Write>(w: W, stations: &[Station]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["station_id", "lat", "lon"])?;
    for s in stations {
        wr.write_record([s.id.clone(), s.lat.to_string(), s.lon.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Writes through a temporary file in the same directory and renames it
/// into place; parent directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("no file name in {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_round_trip() {
        let states = vec![
            DMatrix::from_row_slice(2, 3, &[1.0, 2.5, -3.0, 0.0, 1e-7, 4.0]),
            DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
        ];
        let p = TrajectoryPanel::new(2, states).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node,t,x1,x2\n1,0,1,0\n"));
        let back = read_panel_csv(&buf[..], Path::new("p.csv")).unwrap();
        assert_eq!(back.states, p.states);
    }

    #[test]
    fn panel_gaps_rejected() {
        let text = "node,t,x1\n1,0,1.0\n1,2,2.0\n";
        assert!(read_panel_csv(text.as_bytes(), Path::new("p.csv")).is_err());
        let zero = "node,t,x1\n0,0,1.0\n";
        assert!(matches!(read_panel_csv(zero.as_bytes(), Path::new("p.csv")), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn atomic_write_creates_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/c.txt");
        write_atomic(&p, b"hello").unwrap();
        write_atomic(&p, b"again").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "again");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
