//! Run configuration: a TOML file with complex numbers written as `"a+bi"`.

use openxyz::{DualShift, LatticeTau, ModelParams, Parity, XXZParams, C64};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// A complex number that serializes as `"a+bi"` and round-trips exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cx(pub C64);

pub fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("bad number {s:?}"))
}

pub fn parse_complex(text: &str) -> Result<C64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = s.strip_suffix('i') else {
        return Ok(C64::new(parse_real(&s)?, 0.0));
    };
    // Split at the last sign that is neither leading nor part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| -> Result<f64, String> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => parse_real(t),
        }
    };
    let parts = match split {
        Some(k) => parse_real(&body[..k]).and_then(|re| Ok(C64::new(re, imag(&body[k..])?))),
        None => imag(body).map(|im| C64::new(0.0, im)),
    };
    parts.map_err(|e| format!("{e} in complex number {text:?}"))
}

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_complex(self.0))
    }
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Cx;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a complex number string such as \"0.02+0.03i\"")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Cx, E> {
                parse_complex(v).map(Cx).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Cx, E> {
                Ok(Cx(C64::new(v, 0.0)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Cx, E> {
                Ok(Cx(C64::new(v as f64, 0.0)))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub tau: Cx,
    pub eta: Cx,
    pub n_sites: usize,
    pub beta_minus: [Cx; 3],
    pub beta_plus: [Cx; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inhomogeneities: Option<Vec<Cx>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub eps: f64,
    pub kmax: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            eps: 1e-16,
            kmax: 1_000_000,
            threads: 1,
            seed: 7,
        }
    }
}

/// A one-parameter sweep of a boundary parameter or of `η`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// `beta_minus_1` … `beta_plus_3`, or `eta`.
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    /// Sweep along the imaginary axis: the value set is `i·x`.
    #[serde(default)]
    pub imaginary: bool,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        self.target().map(|_| ())
    }

    fn target(&self) -> Result<Target, String> {
        if self.param == "eta" {
            return Ok(Target::Eta);
        }
        let side = if let Some(rest) = self.param.strip_prefix("beta_minus_") {
            (true, rest)
        } else if let Some(rest) = self.param.strip_prefix("beta_plus_") {
            (false, rest)
        } else {
            return Err(format!("unknown sweep parameter {:?}", self.param));
        };
        match side.1 {
            "1" | "2" | "3" => Ok(Target::Beta {
                minus: side.0,
                index: side.1.parse::<usize>().unwrap() - 1,
            }),
            _ => Err(format!("unknown sweep parameter {:?}", self.param)),
        }
    }
}

enum Target {
    Eta,
    Beta { minus: bool, index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualShiftCfg {
    TwoEta,
    LiteralTwo,
}

impl From<DualShiftCfg> for DualShift {
    fn from(d: DualShiftCfg) -> Self {
        match d {
            DualShiftCfg::TwoEta => DualShift::TwoEta,
            DualShiftCfg::LiteralTwo => DualShift::LiteralTwo,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    pub points: usize,
    pub dual_shift: DualShiftCfg,
    pub threshold: f64,
    pub commutator_threshold: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            points: 20,
            dual_shift: DualShiftCfg::TwoEta,
            threshold: 1e-10,
            commutator_threshold: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodCfg {
    Dense,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RootsSection {
    /// Number of lowest states whose roots are extracted.
    pub states: usize,
    pub method: MethodCfg,
    pub grid: usize,
    pub threshold: f64,
}

impl Default for RootsSection {
    fn default() -> Self {
        Self {
            states: 2,
            method: MethodCfg::Dense,
            grid: 80,
            threshold: 0.03,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Thermo,
    Xxz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityCfg {
    Even,
    Odd,
}

impl From<ParityCfg> for Parity {
    fn from(p: ParityCfg) -> Self {
        match p {
            ParityCfg::Even => Parity::Even,
            ParityCfg::Odd => Parity::Odd,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub branch: Branch,
    pub parities: Vec<ParityCfg>,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self {
            branch: Branch::Thermo,
            parities: vec![ParityCfg::Even, ParityCfg::Odd],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub sizes: Vec<usize>,
    pub method: MethodCfg,
    /// Largest final discrepancy accepted by the convergence verdict.
    pub threshold: f64,
    /// Values of `Im τ` at which thermo is compared with the XXZ branch.
    pub xxz_heights: Vec<f64>,
    pub xxz_threshold: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            sizes: vec![8, 10, 12],
            method: MethodCfg::Iterative,
            threshold: 0.1,
            xxz_heights: Vec::new(),
            xxz_threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub roots: RootsSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub validate: ValidateSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if let Some(s) = &cfg.sweep {
            s.validate()?;
        }
        cfg.model_params().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    /// Canonical text; the provenance hash is taken over this.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_params(&self) -> openxyz::Result<ModelParams> {
        self.model_params_with(self.model.n_sites, None)
    }

    /// Model parameters at a chain length, with an optional sweep value applied.
    pub fn model_params_with(
        &self,
        n_sites: usize,
        sweep_value: Option<f64>,
    ) -> openxyz::Result<ModelParams> {
        let m = &self.model;
        let mut eta = m.eta.0;
        let mut bm = m.beta_minus.map(|z| z.0);
        let mut bp = m.beta_plus.map(|z| z.0);
        if let (Some(s), Some(x)) = (&self.sweep, sweep_value) {
            let v = if s.imaginary {
                C64::new(0.0, x)
            } else {
                C64::new(x, 0.0)
            };
            match s.target().map_err(openxyz::Error::Domain)? {
                Target::Eta => eta = v,
                Target::Beta { minus: true, index } => bm[index] = v,
                Target::Beta {
                    minus: false,
                    index,
                } => bp[index] = v,
            }
        }
        let p = ModelParams::new(LatticeTau::new(m.tau.0)?, eta, n_sites, bm, bp)?;
        match &m.inhomogeneities {
            Some(th) if n_sites == m.n_sites => {
                p.with_inhomogeneities(th.iter().map(|z| z.0).collect())
            }
            _ => Ok(p),
        }
    }

    pub fn xxz_params(
        &self,
        parity: Parity,
        sweep_value: Option<f64>,
    ) -> openxyz::Result<XXZParams> {
        let p = self.model_params_with(self.model.n_sites, sweep_value)?;
        XXZParams::new(p.eta, p.beta_minus, p.beta_plus, parity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_strings_round_trip() {
        for z in [
            C64::new(0.02, 0.0),
            C64::new(0.0, -0.03),
            C64::new(1e-20, 3.5e7),
            C64::new(-0.1, -0.2),
            C64::new(0.1, 0.3),
        ] {
            assert_eq!(parse_complex(&format_complex(z)).unwrap(), z);
        }
        assert_eq!(parse_complex("i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_complex("1e-3-2E+2i").unwrap(), C64::new(1e-3, -200.0));
        assert_eq!(parse_complex(" 0.6 i").unwrap(), C64::new(0.0, 0.6));
        assert!(parse_complex("0.6j").is_err());
    }
}
