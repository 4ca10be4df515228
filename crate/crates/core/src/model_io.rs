//! Plain-text model files.
//!
//! ```text
//! psvm-model/1
//! kernel gaussian <sigma>        | kernel linear
//! hyper <p> <C> <eps> <max_iter> <seed>
//! penalty smooth <gamma> <theta> | penalty hard
//! n_train <m>
//! n_features <M>
//! scaler none                    | scaler <mean_1..M> <sd_1..M>
//! classes <k> <label>...
//! pair <a> <b> <n_sv> <bias>
//! sv <train_index> <coef> <x_1> ... <x_M>
//! end
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Standardizer;
use crate::dual::{Hyperparams, Penalty};
use crate::error::{PsvmError, Result};
use crate::kernel::Kernel;
use crate::matrix::Matrix;
use crate::model::{BinaryModel, OvOModel, PairModel};

pub const FORMAT_TAG: &str = "psvm-model/1";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_string(model: &OvOModel) -> Result<String> {
    let first = model
        .pairs
        .first()
        .ok_or_else(|| PsvmError::invalid("cannot serialize a model without pairs"))?;
    let hp = first.model.hp;
    let mut out = String::new();
    out.push_str(FORMAT_TAG);
    out.push('\n');
    match &first.model.kernel {
        Kernel::Linear => out.push_str("kernel linear\n"),
        Kernel::Gaussian { sigma } => {
            let _ = writeln!(out, "kernel gaussian {}", num(*sigma));
        }
        Kernel::Precomputed(_) => {
            return Err(PsvmError::invalid(
                "models on precomputed kernels cannot be serialized",
            ))
        }
    }
    let _ = writeln!(
        out,
        "hyper {} {} {} {} {}",
        num(hp.p),
        num(hp.c),
        num(hp.eps),
        hp.max_iter,
        hp.seed
    );
    match hp.penalty {
        Penalty::HardMargin => out.push_str("penalty hard\n"),
        Penalty::Smooth { gamma, theta } => {
            let _ = writeln!(out, "penalty smooth {} {}", num(gamma), num(theta));
        }
    }
    let _ = writeln!(out, "n_train {}", model.n_train);
    let _ = writeln!(out, "n_features {}", model.n_features());
    match &model.scaler {
        None => out.push_str("scaler none\n"),
        Some(sc) => {
            out.push_str("scaler");
            for v in sc.mean.iter().chain(&sc.sd) {
                out.push(' ');
                out.push_str(&num(*v));
            }
            out.push('\n');
        }
    }
    if let Some(bad) = model
        .classes
        .iter()
        .find(|c| c.is_empty() || c.chars().any(char::is_whitespace))
    {
        return Err(PsvmError::invalid(format!(
            "class label {bad:?} cannot be serialized: labels must be non-empty without whitespace"
        )));
    }
    let _ = writeln!(
        out,
        "classes {} {}",
        model.classes.len(),
        model.classes.join(" ")
    );
    for p in &model.pairs {
        let m = &p.model;
        let _ = writeln!(
            out,
            "pair {} {} {} {}",
            p.class_a,
            p.class_b,
            m.n_support(),
            num(m.b)
        );
        for k in 0..m.n_support() {
            let _ = write!(out, "sv {} {}", m.support_index[k], num(m.coef[k]));
            for v in m.support_x.row(k) {
                out.push(' ');
                out.push_str(&num(*v));
            }
            out.push('\n');
        }
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn save(model: &OvOModel, path: &Path) -> Result<()> {
    fs::write(path, to_string(model)?).map_err(|e| PsvmError::io(path, e))
}

pub fn load(path: &Path) -> Result<OvOModel> {
    let text = fs::read_to_string(path).map_err(|e| PsvmError::io(path, e))?;
    from_str(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self, key: &str) -> Result<Vec<&'a str>> {
        loop {
            let Some((n, raw)) = self.inner.next() else {
                return Err(PsvmError::ModelFormat {
                    line: self.line + 1,
                    message: format!("unexpected end of file, expected `{key}`"),
                });
            };
            self.line = n + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields[0] != key {
                return Err(self.err(format!("expected `{key}`, found `{}`", fields[0])));
            }
            return Ok(fields[1..].to_vec());
        }
    }

    fn err(&self, message: impl Into<String>) -> PsvmError {
        PsvmError::ModelFormat {
            line: self.line,
            message: message.into(),
        }
    }

    fn real(&self, s: &str) -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| self.err(format!("invalid number `{s}`")))
    }

    fn int(&self, s: &str) -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| self.err(format!("invalid integer `{s}`")))
    }

    fn arity(&self, f: &[&str], n: usize) -> Result<()> {
        if f.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", f.len())));
        }
        Ok(())
    }
}

pub fn from_str(text: &str) -> Result<OvOModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let tag = loop {
        match lines.inner.next() {
            Some((n, l)) if l.trim().is_empty() => lines.line = n + 1,
            Some((n, l)) => {
                lines.line = n + 1;
                break l.trim();
            }
            None => return Err(lines.err("empty model file")),
        }
    };
    if tag != FORMAT_TAG {
        return Err(lines.err(format!(
            "unsupported format tag `{tag}`, expected `{FORMAT_TAG}`"
        )));
    }

    let f = lines.next_fields("kernel")?;
    let kernel = match f.first().copied() {
        Some("linear") => {
            lines.arity(&f, 1)?;
            Kernel::Linear
        }
        Some("gaussian") => {
            lines.arity(&f, 2)?;
            Kernel::gaussian(lines.real(f[1])?).map_err(|e| lines.err(e.to_string()))?
        }
        other => return Err(lines.err(format!("unknown kernel {other:?}"))),
    };

    let f = lines.next_fields("hyper")?;
    lines.arity(&f, 5)?;
    let (p, c) = (lines.real(f[0])?, lines.real(f[1])?);
    let mut hp = Hyperparams::new(p, c).map_err(|e| lines.err(e.to_string()))?;
    hp.eps = lines.real(f[2])?;
    hp.max_iter = lines.int(f[3])?;
    hp.seed = f[4]
        .parse::<u64>()
        .map_err(|_| lines.err(format!("invalid seed `{}`", f[4])))?;

    let f = lines.next_fields("penalty")?;
    hp.penalty = match f.first().copied() {
        Some("hard") => {
            lines.arity(&f, 1)?;
            Penalty::HardMargin
        }
        Some("smooth") => {
            lines.arity(&f, 3)?;
            Penalty::Smooth {
                gamma: lines.real(f[1])?,
                theta: lines.real(f[2])?,
            }
        }
        other => return Err(lines.err(format!("unknown penalty {other:?}"))),
    };

    let f = lines.next_fields("n_train")?;
    lines.arity(&f, 1)?;
    let n_train = lines.int(f[0])?;
    let f = lines.next_fields("n_features")?;
    lines.arity(&f, 1)?;
    let n_features = lines.int(f[0])?;
    let f = lines.next_fields("scaler")?;
    let scaler = if f == ["none"] {
        None
    } else {
        lines.arity(&f, 2 * n_features)?;
        let vals = f
            .iter()
            .map(|v| lines.real(v))
            .collect::<Result<Vec<f64>>>()?;
        Some(Standardizer {
            mean: vals[..n_features].to_vec(),
            sd: vals[n_features..].to_vec(),
        })
    };

    let f = lines.next_fields("classes")?;
    let k = lines.int(f.first().copied().unwrap_or(""))?;
    lines.arity(&f, k + 1)?;
    if k < 2 {
        return Err(lines.err("a model needs at least two classes"));
    }
    let classes: Vec<String> = f[1..].iter().map(|s| s.to_string()).collect();

    let n_pairs = k * (k - 1) / 2;
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let f = lines.next_fields("pair")?;
        lines.arity(&f, 4)?;
        let (a, b, n_sv) = (lines.int(f[0])?, lines.int(f[1])?, lines.int(f[2])?);
        if a >= b || b >= k {
            return Err(lines.err(format!("invalid class pair ({a}, {b})")));
        }
        let bias = lines.real(f[3])?;
        let mut coef = Vec::with_capacity(n_sv);
        let mut support_index = Vec::with_capacity(n_sv);
        let mut data = Vec::with_capacity(n_sv * n_features);
        for _ in 0..n_sv {
            let f = lines.next_fields("sv")?;
            lines.arity(&f, n_features + 2)?;
            support_index.push(lines.int(f[0])?);
            coef.push(lines.real(f[1])?);
            for v in &f[2..] {
                data.push(lines.real(v)?);
            }
        }
        pairs.push(PairModel {
            class_a: a,
            class_b: b,
            model: BinaryModel {
                support_x: Matrix::from_vec(n_sv, n_features, data)?,
                coef,
                b: bias,
                kernel: kernel.clone(),
                hp,
                n_train,
                support_index,
            },
        });
    }
    let f = lines.next_fields("end")?;
    lines.arity(&f, 0)?;
    Ok(OvOModel {
        classes,
        pairs,
        n_train,
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fit_multiclass;

    #[test]
    fn round_trip_is_exact() {
        let x = Matrix::from_rows(&[
            [0.1, 1.3],
            [0.7, -0.2],
            [-1.1, 0.4],
            [2.0, 2.2],
            [-0.3, -1.7],
            [1.1, 0.9],
        ])
        .unwrap();
        let labels: Vec<String> = ["a", "b", "c", "a", "b", "c"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let hp = Hyperparams::new(1.7, 3.0).unwrap();
        let mut model = fit_multiclass(&x, &labels, &hp, &Kernel::gaussian(0.9).unwrap()).unwrap();
        model.scaler = Some(Standardizer::fit(&x));
        let back = from_str(&to_string(&model).unwrap()).unwrap();
        assert_eq!(model, back);
        for r in x.iter_rows() {
            for (p, q) in model.pairs.iter().zip(&back.pairs) {
                let (u, v) = (
                    p.model.decision_value(r).unwrap(),
                    q.model.decision_value(r).unwrap(),
                );
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn rejects_wrong_tag_and_truncation() {
        assert!(matches!(
            from_str("psvm-model/0\n"),
            Err(PsvmError::ModelFormat { .. })
        ));
        assert!(matches!(
            from_str("psvm-model/1\nkernel linear\n"),
            Err(PsvmError::ModelFormat { .. })
        ));
    }
}
