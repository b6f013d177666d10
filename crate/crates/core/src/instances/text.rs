//! Plain-text instance files.
//!
//! ```text
//! privcvar-instance v1 kind=<kind> key=value ...
//! atom key=value ...
//! ```
//!
//! The first line carries the format version, the instance kind and its
//! parameters. Each following non-empty line describes one atom. Floats are
//! written with 17 significant digits so a file reads back bit-for-bit.
//!
//! Kinds:
//! - `scalar-pair`: header `pair tau B p gap`; atoms `dist=0|1 value prob`.
//! - `packing`: header `M tau B p`; atoms `hypothesis=j point prob`, with
//!   point `0` the null observation.
//! - `embedded-linear`: header `d D G B tau`; atoms `prob signs=+-…`, plus one
//!   `slot=dummy prob` atom for the inactive mass `1 − τ`.

use super::linear::{EmbeddedLinearProblem, LinearLowerFamily, SignVectorSource};
use super::packing::PackingInstance;
use super::scalar::{ScalarHardPair, ScalarPairKind};
use crate::error::{Error, Result};
use crate::risk::{DiscreteDistribution, LossBound, TailMass};

pub const FORMAT_TAG: &str = "privcvar-instance";
pub const FORMAT_VERSION: &str = "v1";

/// Parsed instance file: kind, header parameters and atoms, all as ordered
/// key/value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceText {
    pub kind: String,
    pub params: Vec<(String, String)>,
    pub atoms: Vec<Vec<(String, String)>>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl InstanceText {
    pub fn new(kind: &str) -> Self {
        InstanceText {
            kind: kind.to_string(),
            params: vec![],
            atoms: vec![],
        }
    }

    fn param(mut self, key: &str, value: String) -> Self {
        self.params.push((key.to_string(), value));
        self
    }

    pub fn render(&self) -> String {
        let mut out = format!("{FORMAT_TAG} {FORMAT_VERSION} kind={}", self.kind);
        for (k, v) in &self.params {
            out.push_str(&format!(" {k}={v}"));
        }
        out.push('\n');
        for atom in &self.atoms {
            out.push_str("atom");
            for (k, v) in atom {
                out.push_str(&format!(" {k}={v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Format {
            line: 1,
            message: "empty file".into(),
        })?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(FORMAT_TAG) {
            return Err(Error::Format {
                line: 1,
                message: format!("expected `{FORMAT_TAG}` tag"),
            });
        }
        match fields.next() {
            Some(FORMAT_VERSION) => {}
            other => {
                return Err(Error::Format {
                    line: 1,
                    message: format!("unsupported version {other:?}"),
                })
            }
        }
        let mut params = pairs(fields, 1)?;
        if params.first().map(|(k, _)| k.as_str()) != Some("kind") {
            return Err(Error::Format {
                line: 1,
                message: "missing kind".into(),
            });
        }
        let kind = params.remove(0).1;
        let mut atoms = vec![];
        for (i, line) in lines {
            let mut f = line.split_whitespace();
            if f.next() != Some("atom") {
                return Err(Error::Format {
                    line: i + 1,
                    message: "expected `atom`".into(),
                });
            }
            atoms.push(pairs(f, i + 1)?);
        }
        Ok(InstanceText {
            kind,
            params,
            atoms,
        })
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        lookup(&self.params, key, 1)
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.get(key)?, key, 1)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format {
                line: 1,
                message: format!("expected kind {kind}, found {}", self.kind),
            })
        }
    }
}

fn pairs<'a>(fields: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<(String, String)>> {
    fields
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or(Error::Format {
                    line,
                    message: format!("expected key=value, got `{f}`"),
                })
        })
        .collect()
}

fn lookup<'a>(pairs: &'a [(String, String)], key: &str, line: usize) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or(Error::Format {
            line,
            message: format!("missing `{key}`"),
        })
}

fn parse_f64(v: &str, key: &str, line: usize) -> Result<f64> {
    v.parse().map_err(|_| Error::Format {
        line,
        message: format!("`{key}` is not a number: {v}"),
    })
}

fn parse_usize(v: &str, key: &str, line: usize) -> Result<usize> {
    v.parse().map_err(|_| Error::Format {
        line,
        message: format!("`{key}` is not a count: {v}"),
    })
}

impl ScalarHardPair {
    pub fn to_text(&self) -> String {
        let kind = match self.kind {
            ScalarPairKind::Privacy => "privacy",
            ScalarPairKind::Statistical => "statistical",
        };
        let mut t = InstanceText::new("scalar-pair")
            .param("pair", kind.into())
            .param("tau", fmt_f64(self.tau.value()))
            .param("B", fmt_f64(self.bound.value()))
            .param("p", fmt_f64(self.p))
            .param("gap", fmt_f64(self.gap));
        for (index, dist) in self.distributions().iter().enumerate() {
            for &(value, prob) in dist.atoms() {
                t.atoms.push(vec![
                    ("dist".into(), index.to_string()),
                    ("value".into(), fmt_f64(value)),
                    ("prob".into(), fmt_f64(prob)),
                ]);
            }
        }
        t.render()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let t = InstanceText::parse(text)?;
        t.expect_kind("scalar-pair")?;
        let kind = match t.get("pair")? {
            "privacy" => ScalarPairKind::Privacy,
            "statistical" => ScalarPairKind::Statistical,
            other => {
                return Err(Error::Format {
                    line: 1,
                    message: format!("unknown pair {other}"),
                })
            }
        };
        let mut dists = [vec![], vec![]];
        for (i, atom) in t.atoms.iter().enumerate() {
            let line = i + 2;
            let which = parse_usize(lookup(atom, "dist", line)?, "dist", line)?;
            if which > 1 {
                return Err(Error::Format {
                    line,
                    message: "dist must be 0 or 1".into(),
                });
            }
            dists[which].push((
                parse_f64(lookup(atom, "value", line)?, "value", line)?,
                parse_f64(lookup(atom, "prob", line)?, "prob", line)?,
            ));
        }
        let [a0, a1] = dists;
        Ok(ScalarHardPair {
            kind,
            p0: DiscreteDistribution::new(a0)?,
            p1: DiscreteDistribution::new(a1)?,
            p: t.get_f64("p")?,
            gap: t.get_f64("gap")?,
            tau: TailMass::new(t.get_f64("tau")?)?,
            bound: LossBound::new(t.get_f64("B")?)?,
        })
    }
}

impl PackingInstance {
    pub fn to_text(&self) -> String {
        use crate::estimators::FiniteClass;
        let mut t = InstanceText::new("packing")
            .param("M", self.m().to_string())
            .param("tau", fmt_f64(self.tau().value()))
            .param("B", fmt_f64(self.bound().value()))
            .param("p", fmt_f64(self.p()));
        for j in 0..self.m() {
            for (point, prob) in [(j + 1, self.p()), (0, 1.0 - self.p())] {
                t.atoms.push(vec![
                    ("hypothesis".into(), j.to_string()),
                    ("point".into(), point.to_string()),
                    ("prob".into(), fmt_f64(prob)),
                ]);
            }
        }
        t.render()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let t = InstanceText::parse(text)?;
        t.expect_kind("packing")?;
        let m = parse_usize(t.get("M")?, "M", 1)?;
        let inst = PackingInstance::with_mass(
            m,
            t.get_f64("p")?,
            TailMass::new(t.get_f64("tau")?)?,
            LossBound::new(t.get_f64("B")?)?,
        )?;
        if t.atoms.len() != 2 * m {
            return Err(Error::Format {
                line: 1,
                message: format!("expected {} atoms, found {}", 2 * m, t.atoms.len()),
            });
        }
        Ok(inst)
    }
}

impl EmbeddedLinearProblem {
    pub fn to_text(&self, tau: TailMass) -> String {
        let f = &self.family;
        let mut t = InstanceText::new("embedded-linear")
            .param("d", f.dim().to_string())
            .param("D", fmt_f64(f.diameter()))
            .param("G", fmt_f64(f.lipschitz()))
            .param("B", fmt_f64(f.bound().value()))
            .param("tau", fmt_f64(tau.value()));
        for (v, p) in self.source.vectors().iter().zip(self.source.probs()) {
            let signs: String = v.iter().map(|x| if *x > 0.0 { '+' } else { '-' }).collect();
            t.atoms
                .push(vec![("prob".into(), fmt_f64(*p)), ("signs".into(), signs)]);
        }
        t.atoms.push(vec![
            ("slot".into(), "dummy".into()),
            ("prob".into(), fmt_f64(1.0 - tau.value())),
        ]);
        t.render()
    }

    /// Returns the problem and its tail mass.
    pub fn from_text(text: &str) -> Result<(Self, TailMass)> {
        let t = InstanceText::parse(text)?;
        t.expect_kind("embedded-linear")?;
        let family = LinearLowerFamily::new(
            parse_usize(t.get("d")?, "d", 1)?,
            t.get_f64("D")?,
            t.get_f64("G")?,
            LossBound::new(t.get_f64("B")?)?,
        )?;
        let tau = TailMass::new(t.get_f64("tau")?)?;
        let mut atoms = vec![];
        for (i, atom) in t.atoms.iter().enumerate() {
            let line = i + 2;
            if lookup(atom, "slot", line).ok() == Some("dummy") {
                continue;
            }
            let prob = parse_f64(lookup(atom, "prob", line)?, "prob", line)?;
            let signs = lookup(atom, "signs", line)?
                .chars()
                .map(|c| match c {
                    '+' => Ok(1.0),
                    '-' => Ok(-1.0),
                    _ => Err(Error::Format {
                        line,
                        message: format!("bad sign `{c}`"),
                    }),
                })
                .collect::<Result<Vec<f64>>>()?;
            atoms.push((signs, prob));
        }
        Ok((
            EmbeddedLinearProblem::new(family, SignVectorSource::new(atoms)?)?,
            tau,
        ))
    }
}
