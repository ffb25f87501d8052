//! On-disk formats: CPD-CSV observations and the JSON signal sidecar.
//!
//! CPD-CSV: the first line is `<n>,<p>` for vector data or `<n>,<d1>,<d2>`
//! for matrix data, followed by `n` lines of `p` comma-separated floats
//! (matrices flattened row-major). Floats are written with 17 significant
//! digits, so a write/read round trip is bit-exact.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GENERATOR_NAME;
use crate::signal::{ObservationSequence, PiecewiseConstantSignal, Segment, Shape};

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(mut w: W, shape: Shape, rows: &[Vec<f64>]) -> Result<()> {
    let dims: Vec<String> = shape.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "{},{}", rows.len(), dims.join(","))?;
    let mut line = String::new();
    for row in rows {
        if row.len() != shape.len() {
            return Err(Error::Shape {
                expected: shape.len(),
                got: row.len(),
            });
        }
        line.clear();
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt_float(v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_observations<W: Write>(w: W, obs: &ObservationSequence) -> Result<()> {
    write_csv(w, obs.shape, &obs.data)
}

pub fn read_observations<R: BufRead>(r: R) -> Result<ObservationSequence> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file, expected header '<n>,<p>' or '<n>,<d1>,<d2>'".into(),
            })
        }
    };
    let fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            message: format!("header field '{s}' is not a non-negative integer"),
        })
    };
    let (n, shape) = match fields.as_slice() {
        [n, p] => (parse_dim(n)?, Shape::Vector(parse_dim(p)?)),
        [n, r, c] => (parse_dim(n)?, Shape::Matrix(parse_dim(r)?, parse_dim(c)?)),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("header '{header}' must be '<n>,<p>' or '<n>,<d1>,<d2>'"),
            })
        }
    };
    if shape.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "signal dimension must be positive".into(),
        });
    }
    let p = shape.len();
    let mut data = Vec::with_capacity(n);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if data.len() == n {
            return Err(Error::Parse {
                line: lineno,
                message: format!("more than the {n} data rows announced in the header"),
            });
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("'{}' is not a number", f.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != p {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {p} values, found {}", row.len()),
            });
        }
        data.push(row);
    }
    if data.len() != n {
        return Err(Error::Parse {
            line: data.len() + 2,
            message: format!("header announces {n} rows but the file has {}", data.len()),
        });
    }
    ObservationSequence::new(shape, data)
}

/// JSON description of a generated signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSidecar {
    pub tau_star: Vec<usize>,
    pub segments: Vec<Segment>,
    pub shape: Shape,
    pub seed: Option<u64>,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub generator: Option<String>,
}

impl SignalSidecar {
    pub fn new(signal: &PiecewiseConstantSignal, seed: Option<u64>, sigma: Option<f64>) -> Self {
        Self {
            tau_star: signal.tau_star().to_vec(),
            segments: signal.segments().to_vec(),
            shape: signal.shape(),
            seed,
            n: signal.n(),
            sigma,
            generator: seed.map(|_| GENERATOR_NAME.to_string()),
        }
    }

    /// Rebuilds the signal and checks the stored change-points against it.
    pub fn to_signal(&self) -> Result<PiecewiseConstantSignal> {
        let signal = PiecewiseConstantSignal::from_segments(self.shape, self.segments.clone())?;
        if signal.tau_star() != self.tau_star.as_slice() {
            return Err(Error::config(format!(
                "sidecar tau_star {:?} disagrees with its segments {:?}",
                self.tau_star,
                signal.tau_star()
            )));
        }
        Ok(signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{corrupt, generate_cut_matrix, generate_sparse_blocks};
    use proptest::prelude::*;

    fn roundtrip(obs: &ObservationSequence) -> ObservationSequence {
        let mut buf = Vec::new();
        write_observations(&mut buf, obs).unwrap();
        read_observations(buf.as_slice()).unwrap()
    }

    #[test]
    fn vector_and_matrix_headers() {
        let s = generate_sparse_blocks(4, 6, 2, 1, 1.0, 2.0, 1).unwrap();
        let obs = corrupt(&s, 0.3, 2).unwrap();
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("6,4\n"));
        assert_eq!(roundtrip(&obs).data, obs.data);

        let s = generate_cut_matrix(3, 5, &[2], 1).unwrap();
        let obs = corrupt(&s, 0.1, 2).unwrap();
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("5,3,3\n"));
        let back = roundtrip(&obs);
        assert_eq!(back.shape, Shape::Matrix(3, 3));
        assert_eq!(back.data, obs.data);
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let err = read_observations("n,p\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = read_observations("2,2\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_observations("2,2\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_observations("3,2\n1,2\n3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let err = read_observations("".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn sidecar_roundtrip() {
        let s = generate_sparse_blocks(10, 20, 4, 3, 0.1, 1.3, 5).unwrap();
        let car = SignalSidecar::new(&s, Some(5), Some(0.5));
        let json = serde_json::to_string(&car).unwrap();
        let back: SignalSidecar = serde_json::from_str(&json).unwrap();
        assert_eq!(back, car);
        assert_eq!(back.to_signal().unwrap(), s);
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 1..8)
        ) {
            let obs = ObservationSequence::new(Shape::Vector(3), rows.clone()).unwrap();
            let back = roundtrip(&obs);
            for (a, b) in back.data.iter().flatten().zip(rows.iter().flatten()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn sidecar_json_roundtrip_is_bit_exact(vals in prop::collection::vec(-1e6f64..1e6, 4)) {
            let segs = vec![
                Segment { start: 1, end: 2, value: vals[..2].to_vec() },
                Segment { start: 3, end: 3, value: vec![vals[2], vals[3] + 1e7] },
            ];
            let s = PiecewiseConstantSignal::from_segments(Shape::Vector(2), segs).unwrap();
            let car = SignalSidecar::new(&s, None, None);
            let back: SignalSidecar = serde_json::from_str(&serde_json::to_string(&car).unwrap()).unwrap();
            prop_assert_eq!(back, car);
        }
    }
}
