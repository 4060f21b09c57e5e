//! Open-loop control schedules and their CSV form.
//!
//! ```text
//! # model: <sha256 hex of the design model>
//! # ...any further comment lines...
//! t,f_1,...,f_F
//! 0.0000000000000000e0,...
//! ```
//!
//! Values are written with 17 significant digits so a read-back is exact.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniformly sampled control fields `fₙ(t)`; between samples the fields are
/// interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
    model_fingerprint: String,
}

impl ControlSchedule {
    pub fn new(times: Vec<f64>, fields: Vec<Vec<f64>>, model_fingerprint: String) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter(
                "a schedule needs at least two samples".into(),
            ));
        }
        if times.len() != fields.len() {
            return Err(Error::InvalidParameter(format!(
                "{} times but {} field records",
                times.len(),
                fields.len()
            )));
        }
        let spacing = times[1] - times[0];
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter("schedule times must ascend".into()));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || ((w[1] - w[0]) - spacing).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "schedule times are not uniformly spaced at sample {}",
                    k + 1
                )));
            }
        }
        let width = fields[0].len();
        for (k, f) in fields.iter().enumerate() {
            if f.len() != width {
                return Err(Error::InvalidParameter(format!(
                    "record {k} has {} fields, expected {width}",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "record {k} holds a non-finite field value"
                )));
            }
        }
        Ok(Self {
            times,
            fields,
            model_fingerprint,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_fields(&self) -> usize {
        self.fields[0].len()
    }

    pub fn spacing(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Fields at time `t`, linearly interpolated. Times that land on a
    /// sample (to 1e-9 of the spacing) return that sample exactly; times
    /// outside the covered range are held at the end values.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let h = self.spacing();
        let u = (t - self.times[0]) / h;
        let last = self.times.len() - 1;
        let nearest = u.round();
        if (u - nearest).abs() < 1e-9 {
            let k = (nearest.max(0.0) as usize).min(last);
            return self.fields[k].clone();
        }
        if u <= 0.0 {
            return self.fields[0].clone();
        }
        let k = u.floor() as usize;
        if k >= last {
            return self.fields[last].clone();
        }
        let w = u - k as f64;
        self.fields[k]
            .iter()
            .zip(&self.fields[k + 1])
            .map(|(a, b)| a + (b - a) * w)
            .collect()
    }

    /// Writes the schedule; `comments` are emitted as `# ` lines after the
    /// fingerprint line.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        writeln!(out, "# model: {}", self.model_fingerprint)?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        write!(out, "t")?;
        for n in 1..=self.num_fields() {
            write!(out, ",f_{n}")?;
        }
        writeln!(out)?;
        for (t, f) in self.times.iter().zip(&self.fields) {
            write!(out, "{}", fmt_f64(*t))?;
            for v in f {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut fingerprint = String::new();
        let mut header: Option<usize> = None;
        let mut times = Vec::new();
        let mut fields = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(fp) = comment.trim().strip_prefix("model:") {
                    fingerprint = fp.trim().to_string();
                }
                continue;
            }
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            match header {
                None => {
                    let ok = cols.first() == Some(&"t")
                        && cols
                            .iter()
                            .skip(1)
                            .enumerate()
                            .all(|(n, c)| *c == format!("f_{}", n + 1));
                    if !ok || cols.len() < 2 {
                        return Err(Error::Format {
                            line: lineno,
                            message: format!("expected header `t,f_1,...`, found `{trimmed}`"),
                        });
                    }
                    header = Some(cols.len() - 1);
                }
                Some(width) => {
                    if cols.len() != width + 1 {
                        return Err(Error::Format {
                            line: lineno,
                            message: format!(
                                "expected {} columns, found {}",
                                width + 1,
                                cols.len()
                            ),
                        });
                    }
                    let mut values = cols.iter().map(|c| {
                        c.parse::<f64>().map_err(|e| Error::Format {
                            line: lineno,
                            message: format!("`{c}`: {e}"),
                        })
                    });
                    times.push(values.next().unwrap()?);
                    fields.push(values.collect::<Result<Vec<f64>>>()?);
                }
            }
        }
        if header.is_none() {
            return Err(Error::Format {
                line: 0,
                message: "missing header".into(),
            });
        }
        Self::new(times, fields, fingerprint)
    }
}

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> ControlSchedule {
        let times = (0..5).map(|k| k as f64 * 0.5).collect();
        let fields = (0..5).map(|k| vec![k as f64, -(k as f64) * 2.0]).collect();
        ControlSchedule::new(times, fields, "abc".into()).unwrap()
    }

    #[test]
    fn interpolation() {
        let s = ramp();
        assert_eq!(s.at(1.0), vec![2.0, -4.0]);
        assert_eq!(s.at(0.75), vec![1.5, -3.0]);
        assert_eq!(s.at(-1.0), vec![0.0, 0.0]);
        assert_eq!(s.at(10.0), vec![4.0, -8.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        let bad = ControlSchedule::new(vec![0.0, 1.0, 1.5], vec![vec![0.0]; 3], String::new());
        assert!(bad.is_err());
        let ragged = ControlSchedule::new(
            vec![0.0, 1.0],
            vec![vec![0.0], vec![0.0, 1.0]],
            String::new(),
        );
        assert!(ragged.is_err());
        let nan = ControlSchedule::new(
            vec![0.0, 1.0],
            vec![vec![0.0], vec![f64::NAN]],
            String::new(),
        );
        assert!(nan.is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        ramp().write_csv(&mut buf, &["note".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# model: abc"));
        assert_eq!(lines.next(), Some("# note"));
        assert_eq!(lines.next(), Some("t,f_1,f_2"));
        assert_eq!(
            lines.next(),
            Some("0.0000000000000000e0,0.0000000000000000e0,-0.0000000000000000e0")
        );
    }

    #[test]
    fn malformed_csv() {
        let text = "t,g_1\n0,1\n";
        assert!(matches!(
            ControlSchedule::read_csv(text.as_bytes()),
            Err(Error::Format { line: 1, .. })
        ));
        let text = "t,f_1\n0,1\n1\n";
        assert!(matches!(
            ControlSchedule::read_csv(text.as_bytes()),
            Err(Error::Format { line: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 2..20),
            h in 1e-4f64..1.0,
        ) {
            let times: Vec<f64> = (0..values.len()).map(|k| k as f64 * h).collect();
            let s = ControlSchedule::new(times, values, "ff00".into()).unwrap();
            let mut buf = Vec::new();
            s.write_csv(&mut buf, &[]).unwrap();
            let back = ControlSchedule::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
