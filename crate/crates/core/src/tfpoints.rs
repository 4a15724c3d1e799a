//! Irregular time-frequency point sets.
//!
//! A [`TFPointSet`] is a flat list of `(t, f, m)` tuples: time in seconds,
//! frequency in Hz and a linear non-negative magnitude. Every transform in
//! this crate produces one, and every factorizer consumes one, so points
//! coming from different transforms can be freely concatenated.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CSV header of the point file format.
pub const POINTS_HEADER: &str = "t_sec,f_hz,mag";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TFPoint {
    /// Time in seconds.
    pub t: f64,
    /// Frequency in Hz.
    pub f: f64,
    /// Linear magnitude.
    pub m: f64,
}

impl TFPoint {
    pub fn new(t: f64, f: f64, m: f64) -> Self {
        Self { t, f, m }
    }

    /// Checks the point invariants, returning a description of the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(self.t.is_finite() && self.f.is_finite() && self.m.is_finite()) {
            return Err(format!("non-finite value in ({}, {}, {})", self.t, self.f, self.m));
        }
        if self.m < 0.0 {
            return Err(format!("negative magnitude {}", self.m));
        }
        if self.f < 0.0 {
            return Err(format!("negative frequency {}", self.f));
        }
        if self.t < 0.0 {
            return Err(format!("negative time {}", self.t));
        }
        Ok(())
    }
}

/// An ordered collection of time-frequency points.
///
/// Duplicate `(t, f)` coordinates are allowed; hybrid representations built
/// from several transforms may overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct TFPointSet {
    points: Vec<TFPoint>,
    pub source_tag: String,
}

impl TFPointSet {
    /// Builds a point set, validating every point. Empty sets are permitted
    /// here (a silent sinusoidal analysis yields one) but cannot be saved or
    /// factorized.
    pub fn new(points: Vec<TFPoint>, source_tag: impl Into<String>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            p.check().map_err(|msg| Error::InvalidArgument(format!("point {i}: {msg}")))?;
        }
        Ok(Self { points, source_tag: source_tag.into() })
    }

    pub fn points(&self) -> &[TFPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TFPoint> {
        self.points.iter()
    }

    /// Appends all points of `other`, joining the source tags with `;`.
    pub fn extend(&mut self, other: TFPointSet) {
        self.points.extend(other.points);
        if self.source_tag.is_empty() {
            self.source_tag = other.source_tag;
        } else if !other.source_tag.is_empty() {
            self.source_tag.push(';');
            self.source_tag.push_str(&other.source_tag);
        }
    }

    /// Keeps only the points whose time lies in `[t_start, t_end)`.
    pub fn restrict_time(&self, t_start: f64, t_end: f64) -> TFPointSet {
        TFPointSet {
            points: self.points.iter().filter(|p| p.t >= t_start && p.t < t_end).copied().collect(),
            source_tag: self.source_tag.clone(),
        }
    }

    /// Multiplies every magnitude by `factor` (which must be non-negative).
    pub fn scale_magnitudes(&mut self, factor: f64) {
        assert!(factor >= 0.0 && factor.is_finite());
        for p in &mut self.points {
            p.m *= factor;
        }
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.m).sum::<f64>() / self.points.len() as f64
    }
}

impl<'a> IntoIterator for &'a TFPointSet {
    type Item = &'a TFPoint;
    type IntoIter = std::slice::Iter<'a, TFPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Constants that map physical coordinates into the unit interval seen by
/// the neural factor functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationInfo {
    pub t_min: f64,
    pub t_max: f64,
    /// Reference frequency (the Nyquist frequency of the analysed audio).
    pub f_scale: f64,
    /// Divisor applied to magnitudes.
    pub m_scale: f64,
}

impl NormalizationInfo {
    pub fn new(t_min: f64, t_max: f64, f_scale: f64, m_scale: f64) -> Result<Self> {
        let info = Self { t_min, t_max, f_scale, m_scale };
        info.validate()?;
        Ok(info)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_min, self.t_max, self.f_scale, self.m_scale].iter().all(|v| v.is_finite());
        if !finite || self.t_max <= self.t_min || self.f_scale <= 0.0 || self.m_scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid normalization {self:?}: need t_max > t_min, f_scale > 0, m_scale > 0"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn normalize_t(&self, t: f64) -> f64 {
        (t - self.t_min) / (self.t_max - self.t_min)
    }

    #[inline]
    pub fn normalize_f(&self, f: f64) -> f64 {
        f / self.f_scale
    }

    /// Same time normalization with a different magnitude divisor.
    pub fn with_m_scale(&self, m_scale: f64) -> Self {
        Self { m_scale, ..*self }
    }
}

/// Derives normalization constants from a point set.
///
/// A degenerate time span is widened by an epsilon-scaled amount and a zero
/// mean magnitude falls back to a divisor of 1.
pub fn compute_normalization(points: &TFPointSet, nyquist_hz: f64) -> Result<NormalizationInfo> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !(nyquist_hz > 0.0 && nyquist_hz.is_finite()) {
        return Err(Error::InvalidArgument(format!("nyquist must be positive, got {nyquist_hz}")));
    }
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        t_min = t_min.min(p.t);
        t_max = t_max.max(p.t);
    }
    if t_max <= t_min {
        t_max = t_min + f64::EPSILON * t_min.abs().max(1.0);
    }
    let mean = points.mean_magnitude();
    let m_scale = if mean > 0.0 { mean } else { 1.0 };
    NormalizationInfo::new(t_min, t_max, nyquist_hz, m_scale)
}

pub fn read_points<R: Read>(reader: R, source_tag: &str) -> Result<TFPointSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields != ["t_sec", "f_hz", "mag"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{POINTS_HEADER}`, found `{}`", fields.join(",")),
        });
    }
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::Parse { line, msg: e.to_string() });
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = [0.0; 3];
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = field.trim().parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("`{field}`: {e}") })?;
        }
        let p = TFPoint::new(vals[0], vals[1], vals[2]);
        p.check().map_err(|msg| Error::InvalidRow { line, msg })?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(TFPointSet { points, source_tag: source_tag.to_string() })
}

/// Loads a point set from a `t_sec,f_hz,mag` CSV file.
pub fn load_points(path: impl AsRef<Path>) -> Result<TFPointSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = format!("csv:{}", path.display());
    read_points(file, &tag)
}

/// Writes points as CSV. Floats use the shortest representation that
/// parses back to the identical value, so save/load is lossless.
pub fn write_points<W: Write>(points: &TFPointSet, writer: W) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut w = BufWriter::new(writer);
    let io_err = |e| Error::io("<points>", e);
    writeln!(w, "{POINTS_HEADER}").map_err(io_err)?;
    for p in points {
        writeln!(w, "{},{},{}", p.t, p.f, p.m).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn save_points(points: &TFPointSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_points(points, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TFPointSet> {
        read_points(text.as_bytes(), "test")
    }

    #[test]
    fn parses_rows_in_order() {
        let set = parse("t_sec,f_hz,mag\n0.0,440.0,1.5\n0.1,440.0,0.5\n").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.points()[0], TFPoint::new(0.0, 440.0, 1.5));
        assert_eq!(set.points()[1], TFPoint::new(0.1, 440.0, 0.5));
    }

    #[test]
    fn empty_data_section_is_rejected() {
        let err = parse("t_sec,f_hz,mag\n").unwrap_err();
        assert!(matches!(err, Error::EmptyPointSet));
        assert_eq!(err.to_string(), "empty point set");
    }

    #[test]
    fn negative_magnitude_names_line() {
        let err = parse("t_sec,f_hz,mag\n0.0,440.0,-1.0\n").unwrap_err();
        match err {
            Error::InvalidRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("t_sec,f_hz,mag\n0.0,1.0,1.0\n0.0,abc,1.0\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("t_sec,f_hz,mag\n0.0,1.0\n").unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(parse("t,f,m\n0,0,0\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicates_survive_round_trip() {
        let set = TFPointSet::new(
            vec![TFPoint::new(0.5, 100.0, 1.0), TFPoint::new(0.5, 100.0, 2.0), TFPoint::new(0.25, 100.0, 3.0)],
            "dup",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_points(&set, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t_sec,f_hz,mag\n0.5,100,1\n0.5,100,2\n0.25,100,3\n");
        assert_eq!(parse(&text).unwrap().points(), set.points());
    }

    #[test]
    fn saving_empty_set_fails() {
        let set = TFPointSet::new(vec![], "empty").unwrap();
        assert!(matches!(write_points(&set, Vec::new()), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn normalization_arithmetic() {
        let set = TFPointSet::new(vec![TFPoint::new(0.0, 10.0, 1.0), TFPoint::new(2.0, 20.0, 3.0)], "").unwrap();
        let n = compute_normalization(&set, 8000.0).unwrap();
        assert_eq!((n.t_min, n.t_max, n.f_scale, n.m_scale), (0.0, 2.0, 8000.0, 2.0));
    }

    #[test]
    fn degenerate_normalization_is_widened() {
        let set = TFPointSet::new(vec![TFPoint::new(1.0, 10.0, 0.0)], "").unwrap();
        let n = compute_normalization(&set, 8000.0).unwrap();
        assert_eq!(n.t_min, 1.0);
        assert!(n.t_max > 1.0 && n.t_max - 1.0 < 1e-12);
        assert_eq!(n.m_scale, 1.0);

        let equal = TFPointSet::new((0..4).map(|i| TFPoint::new(i as f64, 1.0, 5.0)).collect(), "").unwrap();
        assert_eq!(compute_normalization(&equal, 1.0).unwrap().m_scale, 5.0);
    }

    #[test]
    fn normalization_rejects_empty() {
        let set = TFPointSet::new(vec![], "").unwrap();
        assert!(matches!(compute_normalization(&set, 1.0), Err(Error::EmptyPointSet)));
    }
}
