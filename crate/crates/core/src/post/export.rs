use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Image2;

use super::metrics::MetricsReport;

/// 8-bit binary PGM (P5); values clamped to `[0, 1]`.
pub fn write_pgm(path: &Path, image: &Image2) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.extend(image.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a P5 PGM written by [`write_pgm`] back to `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<Image2> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Header("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Header(format!("bad PGM field {s:?}")))
    };
    if fields[0] != "P5" || parse(&fields[3])? != 255 {
        return Err(Error::Header("only 8-bit P5 PGM is supported".into()));
    }
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = bytes.get(pos..pos + w * h).ok_or(Error::Truncated {
        expected: (pos + w * h) as u64,
        found: bytes.len() as u64,
    })?;
    Image2::new(w, h, data.iter().map(|&b| b as f64 / 255.0).collect())
}

/// `metrics.csv` (one header line, one row) and `metrics.json` in `dir`.
pub fn write_metrics(dir: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("metrics.csv");
    std::fs::write(&csv, report.csv()).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("metrics.json");
    let mut f = std::fs::File::create(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n").map_err(|e| Error::io(&json, e))
}
