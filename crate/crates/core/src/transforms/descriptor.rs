//! Textual transform descriptors such as `stft:512,128`, `cqt:55,3520,12`,
//! `sin:1024,256,-60`, and hybrids joined by `;` with `@t0-t1` segments.

use std::fmt;
use std::str::FromStr;

use super::audio::AudioBuffer;
use super::cqt::{cqt_to_points, CqtConfig};
use super::sinusoidal::sinusoidal_model_points;
use super::stft::{stft, stft_to_points};
use crate::error::{Error, Result};
use crate::tfpoints::TFPointSet;

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Stft { window_size: usize, hop: usize },
    Cqt(CqtConfig),
    Sinusoidal { window_size: usize, hop: usize, threshold_db: f64 },
}

impl Transform {
    /// Runs the transform. With `calibrated`, STFT-based magnitudes are
    /// divided by half the window sum so that every transform reports
    /// sinusoid amplitudes on the same scale as the constant-Q analysis.
    pub fn points(&self, audio: &AudioBuffer, calibrated: bool) -> Result<TFPointSet> {
        match *self {
            Transform::Stft { window_size, hop } => {
                let mut pts = stft_to_points(&stft(audio, window_size, hop)?);
                if calibrated {
                    pts.scale_magnitudes(4.0 / window_size as f64);
                }
                Ok(pts)
            }
            Transform::Sinusoidal { window_size, hop, threshold_db } => {
                let mut pts = sinusoidal_model_points(audio, window_size, hop, threshold_db)?;
                if calibrated {
                    pts.scale_magnitudes(4.0 / window_size as f64);
                }
                Ok(pts)
            }
            Transform::Cqt(ref cfg) => cqt_to_points(audio, cfg),
        }
    }
}

fn fields<T: FromStr>(body: &str, kind: &str, min: usize, max: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = body.split(',').map(str::trim).collect();
    if parts.len() < min || parts.len() > max {
        return Err(Error::InvalidArgument(format!(
            "`{kind}` takes {min}..={max} comma-separated values, got `{body}`"
        )));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| Error::InvalidArgument(format!("bad number `{p}` in `{kind}:{body}`"))))
        .collect()
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) =
            s.split_once(':').ok_or_else(|| Error::InvalidArgument(format!("unknown transform `{s}`")))?;
        match kind.trim() {
            "stft" => {
                let v: Vec<usize> = fields(body, "stft", 2, 2)?;
                Ok(Transform::Stft { window_size: v[0], hop: v[1] })
            }
            "sin" => {
                let v: Vec<f64> = fields(body, "sin", 3, 3)?;
                let as_usize = |x: f64| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(Error::InvalidArgument(format!("`sin` sizes must be integers, got {x}")))
                    }
                };
                Ok(Transform::Sinusoidal { window_size: as_usize(v[0])?, hop: as_usize(v[1])?, threshold_db: v[2] })
            }
            "cqt" => {
                let v: Vec<f64> = fields(body, "cqt", 3, 4)?;
                if v[2] < 1.0 || v[2].fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "bins per octave must be a positive integer, got {}",
                        v[2]
                    )));
                }
                let mut cfg = CqtConfig::new(v[0], v[1], v[2] as u32);
                if let Some(&q) = v.get(3) {
                    cfg.q_scale = q;
                }
                Ok(Transform::Cqt(cfg))
            }
            other => Err(Error::InvalidArgument(format!("unknown transform kind `{other}`"))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Stft { window_size, hop } => write!(f, "stft:{window_size},{hop}"),
            Transform::Sinusoidal { window_size, hop, threshold_db } => {
                write!(f, "sin:{window_size},{hop},{threshold_db}")
            }
            Transform::Cqt(c) => write!(f, "cqt:{},{},{},{}", c.f_min_hz, c.f_max_hz, c.bins_per_octave, c.q_scale),
        }
    }
}

/// One transform applied to points whose time falls in `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub transform: Transform,
    pub span: Option<(f64, f64)>,
}

/// A sequence of time segments, each analysed with its own transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub segments: Vec<Segment>,
}

impl TransformSpec {
    pub fn single(transform: Transform) -> Self {
        Self { segments: vec![Segment { transform, span: None }] }
    }

    pub fn is_hybrid(&self) -> bool {
        self.segments.len() > 1
    }

    /// Segments must have spans when there are several of them, and the
    /// spans must be ordered and non-overlapping.
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidArgument("empty transform description".into()));
        }
        if self.is_hybrid() && self.segments.iter().any(|s| s.span.is_none()) {
            return Err(Error::InvalidArgument("every segment of a hybrid transform needs an @start-end span".into()));
        }
        let mut last_end = f64::NEG_INFINITY;
        for seg in &self.segments {
            if let Some((a, b)) = seg.span {
                if !(a.is_finite() && b.is_finite() && a >= 0.0 && a < b) {
                    return Err(Error::InvalidArgument(format!("invalid segment span {a}-{b}")));
                }
                if a < last_end {
                    return Err(Error::InvalidArgument(format!(
                        "segment starting at {a} overlaps the previous one ending at {last_end}"
                    )));
                }
                last_end = b;
            }
        }
        Ok(())
    }

    /// Analyses the whole signal with each transform and keeps the points
    /// whose time lies inside that transform's segment. Hybrid outputs are
    /// amplitude-calibrated so segments share one magnitude scale.
    pub fn points(&self, audio: &AudioBuffer) -> Result<TFPointSet> {
        self.validate()?;
        let calibrated = self.is_hybrid();
        let mut out = TFPointSet::new(Vec::new(), "")?;
        for seg in &self.segments {
            let pts = seg.transform.points(audio, calibrated)?;
            let mut pts = match seg.span {
                Some((a, b)) => pts.restrict_time(a, b),
                None => pts,
            };
            if let Some((a, b)) = seg.span {
                pts.source_tag = format!("{}@{a}-{b}", pts.source_tag);
            }
            out.extend(pts);
        }
        if out.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        Ok(out)
    }
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (body, span) = match part.split_once('@') {
                Some((body, range)) => {
                    let (a, b) = range
                        .split_once('-')
                        .ok_or_else(|| Error::InvalidArgument(format!("segment span `{range}` must be start-end")))?;
                    let parse = |x: &str| {
                        x.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad time `{x}`")))
                    };
                    (body, Some((parse(a)?, parse(b)?)))
                }
                None => (part, None),
            };
            segments.push(Segment { transform: body.parse()?, span });
        }
        let spec = TransformSpec { segments };
        spec.validate()?;
        Ok(spec)
    }
}
