//! Physical constants of the benchmark generator system.
//!
//! Every quantity is stored in SI base units (Ω, H, V, A, rad/s, kg·m², N·m/rad,
//! N·m). The built-in preset converts the milli/kilo-prefixed catalogue values
//! exactly once, here.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MILLI: f64 = 1e-3;
const KILO: f64 = 1e3;

/// Name of the built-in parameter preset.
pub const PRESET_FBM_SSR: &str = "fbm-ssr";

/// Electrical and mechanical constants of the generator, line and shaft.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Line resistance (Ω).
    pub r: f64,
    /// Line inductance (H).
    pub l: f64,
    /// Source voltage amplitude (V).
    pub u_s: f64,
    /// Source angular frequency (rad/s).
    pub omega_s: f64,
    /// Stator/rotor mutual inductance (H).
    pub m: f64,
    /// Rotor winding inductance (H).
    pub l_r: f64,
    /// Stator self inductance (H).
    pub l_s: f64,
    /// Stator mutual inductance (H).
    pub m_s: f64,
    /// Excitation winding resistance (Ω).
    pub r_f: f64,
    /// Damper winding resistance (Ω).
    pub r_q: f64,
    /// Excitation voltage (V).
    pub u_f: f64,
    /// Rotary inertias of the six shaft masses (kg·m²).
    pub inertia: [f64; 6],
    /// Shaft section stiffnesses between neighbouring masses (N·m/rad).
    pub stiffness: [f64; 5],
    /// Mechanical torques applied to masses 1-4 (N·m).
    pub torque: [f64; 4],
    /// Friction matrix (N·m·s/rad).
    pub friction: Matrix6<f64>,
}

impl PhysicalParams {
    /// The first-benchmark-model preset (`fbm-ssr`), with zero friction.
    pub fn fbm_ssr() -> Self {
        let r_f = 0.1597;
        let exciting_current = 3212.64;
        Self {
            r: 0.5 * MILLI,
            l: 0.6182 * MILLI,
            u_s: 26.0 * KILO,
            omega_s: 120.0 * PI,
            m: 33.35 * MILLI,
            l_r: 519.0 * MILLI,
            l_s: 3.0 * MILLI,
            m_s: 0.516 * MILLI,
            r_f,
            r_q: 0.1597,
            u_f: exciting_current * r_f,
            inertia: [1166.56, 1953.83, 10782.84, 11103.62, 10906.22, 429.68],
            stiffness: [
                45692300.27,
                82680741.64,
                123179605.30,
                167728592.0,
                6679980.902,
            ],
            torque: [601469.26, 521273.35, 441077.45, 441077.45],
            friction: Matrix6::zeros(),
        }
    }

    /// Resolves a preset name or a path to a parameter file.
    pub fn from_source(source: &str) -> Result<Self> {
        if source == PRESET_FBM_SSR {
            Ok(Self::fbm_ssr())
        } else {
            Self::from_file(source)
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Parses the `[electrical]` / `[mechanical]` / `[source]` key-value format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ParamFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let params = file.into_params()?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ParamFile::from(self);
        toml::to_string(&file).expect("parameter file serialises")
    }

    /// Exciting current `U_f / R_f` (A).
    pub fn exciting_current(&self) -> f64 {
        self.u_f / self.r_f
    }

    /// `(3/2)M² − L_r(L_s + M_s)`, the full-model coupling denominator.
    pub fn full_denominator(&self) -> f64 {
        1.5 * self.m * self.m - self.l_r * (self.l_s + self.m_s)
    }

    /// `(3/2)M² − L_r(L_s + M_s + L)`, the reduced-model coupling denominator.
    pub fn reduced_denominator(&self) -> f64 {
        1.5 * self.m * self.m - self.l_r * (self.l_s + self.m_s + self.l)
    }

    pub(crate) fn checked_full_denominator(&self) -> Result<f64> {
        let scale = 1.5 * self.m * self.m + self.l_r * (self.l_s + self.m_s);
        check_denominator(self.full_denominator(), scale)
    }

    pub(crate) fn checked_reduced_denominator(&self) -> Result<f64> {
        let scale = 1.5 * self.m * self.m + self.l_r * (self.l_s + self.m_s + self.l);
        check_denominator(self.reduced_denominator(), scale)
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 9] = [
            ("R", self.r),
            ("L", self.l),
            ("M", self.m),
            ("L_r", self.l_r),
            ("L_s", self.l_s),
            ("M_s", self.m_s),
            ("R_f", self.r_f),
            ("R_q", self.r_q),
            ("omega_s", self.omega_s),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        if self.inertia.iter().any(|j| !(j.is_finite() && *j > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "J",
                reason: "inertias must be finite and strictly positive".into(),
            });
        }
        if self.stiffness.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "K",
                reason: "stiffnesses must be finite and strictly positive".into(),
            });
        }
        if !self.u_s.is_finite() || !self.u_f.is_finite() || self.torque.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "torques and source voltages must be finite".into(),
            });
        }
        if self.friction.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "D",
                reason: "friction matrix must be finite".into(),
            });
        }
        self.checked_full_denominator()?;
        self.checked_reduced_denominator()?;
        Ok(())
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::fbm_ssr()
    }
}

fn check_denominator(value: f64, scale: f64) -> Result<f64> {
    if !value.is_finite() || value.abs() <= 64.0 * f64::EPSILON * scale.abs() {
        Err(Error::SingularDenominator { value })
    } else {
        Ok(value)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    electrical: ElectricalSection,
    mechanical: MechanicalSection,
    source: SourceSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElectricalSection {
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "M")]
    m: f64,
    #[serde(rename = "L_r")]
    l_r: f64,
    #[serde(rename = "L_s")]
    l_s: f64,
    #[serde(rename = "M_s")]
    m_s: f64,
    #[serde(rename = "R_f")]
    r_f: f64,
    #[serde(rename = "R_q")]
    r_q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanicalSection {
    #[serde(rename = "J")]
    inertia: [f64; 6],
    #[serde(rename = "K")]
    stiffness: [f64; 5],
    #[serde(rename = "T")]
    torque: [f64; 4],
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    friction: Option<[[f64; 6]; 6]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    #[serde(rename = "U_s")]
    u_s: f64,
    omega_s: f64,
    /// Either `U_f` or `I_f` (exciting current) must be given.
    #[serde(rename = "U_f", default, skip_serializing_if = "Option::is_none")]
    u_f: Option<f64>,
    #[serde(rename = "I_f", default, skip_serializing_if = "Option::is_none")]
    i_f: Option<f64>,
}

impl ParamFile {
    fn into_params(self) -> Result<PhysicalParams> {
        let e = self.electrical;
        let u_f = match (self.source.u_f, self.source.i_f) {
            (Some(u_f), None) => u_f,
            (None, Some(i_f)) => i_f * e.r_f,
            (Some(_), Some(_)) => {
                return Err(Error::Parse(
                    "[source] must give exactly one of U_f and I_f, not both".into(),
                ))
            }
            (None, None) => return Err(Error::Parse("[source] is missing U_f or I_f".into())),
        };
        let friction = match self.mechanical.friction {
            Some(rows) => Matrix6::from_fn(|i, j| rows[i][j]),
            None => Matrix6::zeros(),
        };
        Ok(PhysicalParams {
            r: e.r,
            l: e.l,
            u_s: self.source.u_s,
            omega_s: self.source.omega_s,
            m: e.m,
            l_r: e.l_r,
            l_s: e.l_s,
            m_s: e.m_s,
            r_f: e.r_f,
            r_q: e.r_q,
            u_f,
            inertia: self.mechanical.inertia,
            stiffness: self.mechanical.stiffness,
            torque: self.mechanical.torque,
            friction,
        })
    }
}

impl From<&PhysicalParams> for ParamFile {
    fn from(p: &PhysicalParams) -> Self {
        let friction = if p.friction.iter().all(|d| *d == 0.0) {
            None
        } else {
            Some(std::array::from_fn(|i| std::array::from_fn(|j| p.friction[(i, j)])))
        };
        ParamFile {
            electrical: ElectricalSection {
                r: p.r,
                l: p.l,
                m: p.m,
                l_r: p.l_r,
                l_s: p.l_s,
                m_s: p.m_s,
                r_f: p.r_f,
                r_q: p.r_q,
            },
            mechanical: MechanicalSection {
                inertia: p.inertia,
                stiffness: p.stiffness,
                torque: p.torque,
                friction,
            },
            source: SourceSection {
                u_s: p.u_s,
                omega_s: p.omega_s,
                u_f: Some(p.u_f),
                i_f: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_is_valid_and_in_si_units() {
        let p = PhysicalParams::fbm_ssr();
        p.validate().unwrap();
        assert_eq!(p.r, 0.0005);
        assert!((p.l - 6.182e-4).abs() < 1e-18);
        assert_eq!(p.u_s, 26000.0);
        assert!((p.exciting_current() - 3212.64).abs() < 1e-9);
        assert!((p.omega_s - 376.991_118_430_775_2).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip_preserves_values() {
        let p = PhysicalParams::fbm_ssr();
        let text = p.to_toml_string();
        assert!(text.contains("[electrical]"));
        assert!(text.contains("[mechanical]"));
        assert!(text.contains("[source]"));
        let q = PhysicalParams::from_toml_str(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn exciting_current_key_derives_excitation_voltage() {
        let text = r#"
[electrical]
R = 0.0005
L = 0.0006182
M = 0.03335
L_r = 0.519
L_s = 0.003
M_s = 0.000516
R_f = 0.1597
R_q = 0.1597

[mechanical]
J = [1166.56, 1953.83, 10782.84, 11103.62, 10906.22, 429.68]
K = [45692300.27, 82680741.64, 123179605.30, 167728592.0, 6679980.902]
T = [601469.26, 521273.35, 441077.45, 441077.45]

[source]
U_s = 26000.0
omega_s = 376.99111843077515
I_f = 3212.64
"#;
        let p = PhysicalParams::from_toml_str(text).unwrap();
        assert_eq!(p.u_f, 3212.64 * 0.1597);
        assert_eq!(p.friction, Matrix6::zeros());
    }

    #[test]
    fn rejects_nonpositive_inertia() {
        let mut p = PhysicalParams::fbm_ssr();
        p.inertia[3] = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "J", .. })));
    }

    #[test]
    fn rejects_singular_reduced_denominator() {
        let mut p = PhysicalParams::fbm_ssr();
        // choose L so that (3/2)M² = L_r (L_s + M_s + L)
        p.l = 1.5 * p.m * p.m / p.l_r - p.l_s - p.m_s;
        assert!(matches!(
            p.checked_reduced_denominator(),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = PhysicalParams::fbm_ssr().to_toml_string() + "\n[extra]\nfoo = 1\n";
        assert!(PhysicalParams::from_toml_str(&text).is_err());
    }
}
