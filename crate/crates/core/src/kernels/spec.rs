//! Plain-text kernel specifications.
//!
//! One `key = value` per line, `#` starts a comment. Example:
//!
//! ```text
//! family = fractional
//! dim = 1
//! s = 0.5
//! # optional
//! norm = euclidean
//! outside_ball = 1.0
//! ```
//!
//! Transforms are applied in the order `outside_ball`, `exclude_ball`,
//! `cap`, `symmetrize`.

use super::{Kernel, KernelFamily, Truncation};
use crate::error::{Error, Result};
use crate::norm::Norm;

const KEYS: &[&str] = &[
    "family", "dim", "norm", "s", "p", "scale", "alphas", "radii", "s_list", "alpha", "beta", "m", "gamma", "radius",
    "exponent", "sigma", "amplitude", "rate", "offset", "reach", "symmetrize", "cap", "outside_ball", "exclude_ball",
];

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    value_col: usize,
}

/// A parsed (but not yet validated) kernel specification.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KernelSpec {
    entries: Vec<Entry>,
}

fn spec_err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Spec { line, column, message: message.into() })
}

impl KernelSpec {
    pub fn parse(text: &str) -> Result<KernelSpec> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = match raw.find('#') {
                Some(j) => &raw[..j],
                None => raw,
            };
            if content.trim().is_empty() {
                continue;
            }
            let key_col = content.len() - content.trim_start().len() + 1;
            let Some(eq) = content.find('=') else {
                return spec_err(line, key_col, "expected `key = value`");
            };
            let key = content[..eq].trim();
            if key.is_empty() {
                return spec_err(line, key_col, "missing key before `=`");
            }
            if !KEYS.contains(&key) {
                return spec_err(line, key_col, format!("unknown key `{key}`"));
            }
            let after = &content[eq + 1..];
            let value = after.trim();
            let value_col = eq + 2 + (after.len() - after.trim_start().len());
            if value.is_empty() {
                return spec_err(line, value_col, format!("missing value for `{key}`"));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return spec_err(line, key_col, format!("duplicate key `{key}` (first set on line {})", prev.line));
            }
            entries.push(Entry { key: key.to_string(), value: value.to_string(), line, value_col });
        }
        Ok(KernelSpec { entries })
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Result<KernelSpec> {
        let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        KernelSpec::parse(&text)
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => match parse_num(&e.value) {
                Some(v) => Ok(Some(v)),
                None => spec_err(e.line, e.value_col, format!("`{key}` expects a number, got `{}`", e.value)),
            },
        }
    }

    fn req(&self, key: &str, family: &str) -> Result<f64> {
        match self.num(key)? {
            Some(v) => Ok(v),
            None => {
                let line = self.get("family").map(|e| e.line).unwrap_or(1);
                spec_err(line, 1, format!("family `{family}` requires `{key}`"))
            }
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => {
                let mut out = Vec::new();
                let mut offset = 0;
                for part in e.value.split(',') {
                    let t = part.trim();
                    if t.is_empty() && e.value.trim().is_empty() {
                        break;
                    }
                    match parse_num(t) {
                        Some(v) => out.push(v),
                        None => {
                            return spec_err(e.line, e.value_col + offset, format!("`{key}` expects a comma-separated list of numbers"))
                        }
                    }
                    offset += part.len() + 1;
                }
                Ok(Some(out))
            }
        }
    }

    /// Builds and validates the kernel. Parameter range violations are
    /// reported at the `family` line.
    pub fn build(&self) -> Result<Kernel> {
        let Some(fam) = self.get("family") else {
            return spec_err(1, 1, "missing `family`");
        };
        let name = fam.value.as_str();
        let dim = match self.num("dim")? {
            None => 1,
            Some(v) if v >= 1.0 && v.fract() == 0.0 => v as usize,
            Some(_) => {
                let e = self.get("dim").unwrap();
                return spec_err(e.line, e.value_col, "`dim` must be a positive integer");
            }
        };
        let norm = match self.get("norm") {
            None => Norm::Euclidean,
            Some(e) => Norm::parse(&e.value).map_err(|err| Error::Spec {
                line: e.line,
                column: e.value_col,
                message: err.to_string(),
            })?,
        };
        let p = self.num("p")?.unwrap_or(1.0);
        let family = match name {
            "fractional" => KernelFamily::Fractional { s: self.req("s", name)?, p, scale: self.num("scale")?.unwrap_or(1.0) },
            "piecewise_fractional" => KernelFamily::PiecewiseFractional {
                alphas: self.list("alphas")?.unwrap_or_default(),
                radii: self.list("radii")?.unwrap_or_default(),
                s: self.list("s_list")?.unwrap_or_default(),
                p,
            },
            "log_fractional" => KernelFamily::LogFractional { s: self.req("s", name)?, alpha: self.req("alpha", name)? },
            "oscillating" => {
                let m = self.req("m", name)?;
                if m < 1.0 || m.fract() != 0.0 {
                    let e = self.get("m").unwrap();
                    return spec_err(e.line, e.value_col, "`m` must be a positive integer");
                }
                KernelFamily::Oscillating {
                    s: self.req("s", name)?,
                    alpha: self.req("alpha", name)?,
                    beta: self.req("beta", name)?,
                    m: m as u32,
                }
            }
            "log_gamma" => KernelFamily::LogGamma { gamma: self.req("gamma", name)? },
            "indicator" => KernelFamily::Indicator { radius: self.req("radius", name)? },
            "power" => KernelFamily::Power { exponent: self.req("exponent", name)?, scale: self.num("scale")?.unwrap_or(1.0) },
            "gaussian" => KernelFamily::Gaussian {
                sigma: self.req("sigma", name)?,
                amplitude: self.num("amplitude")?.unwrap_or(1.0),
            },
            "one_sided_exp" => KernelFamily::OneSidedExp { rate: self.num("rate")?.unwrap_or(1.0) },
            "offset_singular" => KernelFamily::OffsetSingular {
                offset: self.req("offset", name)?,
                exponent: self.req("exponent", name)?,
                reach: self.req("reach", name)?,
            },
            other => return spec_err(fam.line, fam.value_col, format!("unknown family `{other}`")),
        };
        let at_family = |err: Error| match err {
            Error::Parameter(m) | Error::Dimension(m) => Error::Spec { line: fam.line, column: fam.value_col, message: m },
            e => e,
        };
        let mut k = Kernel::new(dim, family, norm).map_err(at_family)?;
        for (key, mk) in [
            ("outside_ball", Truncation::OutsideBall as fn(f64) -> Truncation),
            ("exclude_ball", Truncation::ExcludeBall),
            ("cap", Truncation::Cap),
        ] {
            if let Some(v) = self.num(key)? {
                let e = self.get(key).unwrap();
                k = k.truncate(mk(v)).map_err(|err| Error::Spec {
                    line: e.line,
                    column: e.value_col,
                    message: err.to_string(),
                })?;
            }
        }
        if let Some(e) = self.get("symmetrize") {
            match e.value.as_str() {
                "true" | "yes" | "1" => k = k.symmetrize(),
                "false" | "no" | "0" => {}
                _ => return spec_err(e.line, e.value_col, "`symmetrize` expects true or false"),
            }
        }
        Ok(k)
    }

    /// Canonical text (keys in a fixed order), suitable for hashing.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(e) = self.get(key) {
                out.push_str(&format!("{key} = {}\n", e.value));
            }
        }
        out
    }
}

fn parse_num(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        t => t.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_fractional_with_comments() {
        let spec = KernelSpec::parse("# kernel\nfamily = fractional\ndim = 2 # plane\ns = 0.25\n\n").unwrap();
        let k = spec.build().unwrap();
        assert_eq!(k.dim(), 2);
        assert_eq!(k.eval(&[1.0, 0.0]), 1.0);
        assert_eq!(KernelSpec::parse(&spec.to_text()).unwrap().build().unwrap(), k);
    }

    #[test]
    fn diagnostics_carry_positions() {
        let e = KernelSpec::parse("family = fractional\n  bogus = 1\n").unwrap_err();
        assert_eq!(e, Error::Spec { line: 2, column: 3, message: "unknown key `bogus`".into() });
        let e = KernelSpec::parse("family fractional\n").unwrap_err();
        assert!(matches!(e, Error::Spec { line: 1, column: 1, .. }));
        let e = KernelSpec::parse("family = fractional\ns = abc\n").unwrap().build().unwrap_err();
        assert_eq!(e, Error::Spec { line: 2, column: 5, message: "`s` expects a number, got `abc`".into() });
        let e = KernelSpec::parse("family = fractional\ns = 1.5\n").unwrap().build().unwrap_err();
        assert!(matches!(e, Error::Spec { line: 1, column: 10, .. }));
    }

    #[test]
    fn transforms_applied() {
        let k = KernelSpec::parse("family = one_sided_exp\nsymmetrize = true\n").unwrap().build().unwrap();
        assert!(k.is_symmetric());
        let k = KernelSpec::parse("family = fractional\ns = 0.5\noutside_ball = 1\n").unwrap().build().unwrap();
        assert_eq!(k.eval(&[0.5]), 0.0);
        let k = KernelSpec::parse("family = piecewise_fractional\nalphas = 2, 1\nradii = 1.5\ns_list = 0.2, 0.6\n")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(k.eval(&[1.0]), 2.0);
    }
}
