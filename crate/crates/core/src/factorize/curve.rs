use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes a loss curve as `epoch,mean_kl`, epochs counted from 0.
pub fn write_loss_curve<W: Write>(curve: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "mean_kl"])?;
    for (i, v) in curve.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<loss curve>", e))?;
    Ok(())
}

pub fn save_loss_curve(curve: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_loss_curve(curve, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let mut out = Vec::new();
        write_loss_curve(&[1.5, 0.25], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,mean_kl\n0,1.5\n1,0.25\n");
    }
}
