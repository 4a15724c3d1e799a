use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::AudioBuffer;

/// Ratios in dB are clipped to `±CAP_DB` so perfect or empty components
/// stay finite.
pub const CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BssMetrics {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 && den <= 0.0 {
        return 0.0;
    }
    if den <= 0.0 {
        return CAP_DB;
    }
    if num <= 0.0 {
        return -CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-CAP_DB, CAP_DB)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SDR, SIR and SAR from instantaneous projections.
///
/// The estimate is split into a target part (projection onto the
/// reference), an interference part (projection onto the span of both
/// references minus the target part) and the artifact residual.
pub fn bss_metrics(estimate: &AudioBuffer, reference: &AudioBuffer, interference: &AudioBuffer) -> Result<BssMetrics> {
    let (e, s, n) = (&estimate.samples, &reference.samples, &interference.samples);
    if e.len() != s.len() || e.len() != n.len() {
        return Err(Error::Shape(format!(
            "lengths differ: estimate {}, reference {}, interference {}",
            e.len(),
            s.len(),
            n.len()
        )));
    }
    let ss = dot(s, s);
    let nn = dot(n, n);
    if ss == 0.0 || nn == 0.0 {
        return Err(Error::InvalidArgument("reference signals must have non-zero energy".into()));
    }
    let es = dot(e, s);
    let en = dot(e, n);
    let sn = dot(s, n);
    let target_gain = es / ss;
    // Least squares onto span{s, n}; falls back to span{s} when collinear.
    let det = ss * nn - sn * sn;
    let (a, b) =
        if det > 1e-12 * ss * nn { ((es * nn - en * sn) / det, (en * ss - es * sn) / det) } else { (target_gain, 0.0) };
    let mut target = 0.0;
    let mut interf = 0.0;
    let mut artif = 0.0;
    let mut distortion = 0.0;
    let mut tpi = 0.0;
    for i in 0..e.len() {
        let t = target_gain * s[i];
        let proj = a * s[i] + b * n[i];
        let ei = proj - t;
        let ea = e[i] - proj;
        target += t * t;
        interf += ei * ei;
        artif += ea * ea;
        distortion += (ei + ea) * (ei + ea);
        tpi += (t + ei) * (t + ei);
    }
    Ok(BssMetrics {
        sdr_db: ratio_db(target, distortion),
        sir_db: ratio_db(target, interf),
        sar_db: ratio_db(tpi, artif),
    })
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub window_size: usize,
    pub source: usize,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

impl MetricsRow {
    pub fn new(method: &str, window_size: usize, source: usize, m: BssMetrics) -> Self {
        Self { method: method.to_string(), window_size, source, sdr_db: m.sdr_db, sir_db: m.sir_db, sar_db: m.sar_db }
    }
}

/// Writes rows with the header `method,window_size,source,sdr_db,sir_db,sar_db`.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "window_size", "source", "sdr_db", "sir_db", "sar_db"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.window_size.to_string(),
            r.source.to_string(),
            r.sdr_db.to_string(),
            r.sir_db.to_string(),
            r.sar_db.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(v, 8000).unwrap()
    }

    fn signals() -> (Vec<f64>, Vec<f64>) {
        let s: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.05).sin()).collect();
        let n: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.31 + 1.0).cos()).collect();
        (s, n)
    }

    #[test]
    fn perfect_estimate_is_capped() {
        let (s, n) = signals();
        let m = bss_metrics(&buf(s.clone()), &buf(s), &buf(n)).unwrap();
        assert_eq!(m.sdr_db, CAP_DB);
        assert_eq!(m.sir_db, CAP_DB);
    }

    #[test]
    fn interference_estimate_has_negative_sir() {
        let (s, n) = signals();
        let m = bss_metrics(&buf(n.clone()), &buf(s), &buf(n)).unwrap();
        assert!(m.sir_db <= 0.0, "{m:?}");
    }

    #[test]
    fn silent_reference_is_an_error() {
        let (s, _) = signals();
        let z = vec![0.0; s.len()];
        assert!(bss_metrics(&buf(s.clone()), &buf(z.clone()), &buf(s.clone())).is_err());
        assert!(bss_metrics(&buf(s.clone()), &buf(s[..10].to_vec()), &buf(s)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![MetricsRow::new("innmf", 512, 1, BssMetrics { sdr_db: 1.5, sir_db: 2.0, sar_db: -0.25 })];
        let mut out = Vec::new();
        write_metrics_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("method,window_size,source,sdr_db,sir_db,sar_db\n"));
        assert_eq!(read_metrics_csv(out.as_slice()).unwrap(), rows);
    }
}
