//! Analytic field families used for initial data and loads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};
use crate::scalar::Real;

/// Spatial profile; every family returns one value per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: Vec<f64>,
    },
    /// `amplitude · exp(−|x − center|²/(2 width²))`.
    GaussianPulse {
        amplitude: Vec<f64>,
        center: Vec<f64>,
        width: f64,
    },
    /// `amplitude · cos(k·x + phase)`.
    PlaneWave {
        amplitude: Vec<f64>,
        wavevector: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · x_axis / L_axis`.
    Ramp {
        amplitude: Vec<f64>,
        #[serde(default)]
        axis: usize,
    },
    /// Independent uniform samples in `[−amplitude, amplitude]`, seeded by the run seed.
    Noise {
        amplitude: Vec<f64>,
    },
}

impl Profile {
    pub fn components(&self) -> usize {
        match self {
            Profile::Constant { value } => value.len(),
            Profile::GaussianPulse { amplitude, .. }
            | Profile::PlaneWave { amplitude, .. }
            | Profile::Ramp { amplitude, .. }
            | Profile::Noise { amplitude } => amplitude.len(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Profile::Constant { .. } => "constant",
            Profile::GaussianPulse { .. } => "gaussian-pulse",
            Profile::PlaneWave { .. } => "plane-wave",
            Profile::Ramp { .. } => "ramp",
            Profile::Noise { .. } => "noise",
        }
    }

    /// Checks component count and geometric parameters against dimension `d`.
    pub fn validate(&self, ncomp: usize, d: usize) -> std::result::Result<(), String> {
        if self.components() != ncomp {
            return Err(format!("{} profile has {} components, expected {ncomp}", self.family(), self.components()));
        }
        match self {
            Profile::GaussianPulse { center, width, .. } => {
                if center.len() != d {
                    return Err(format!("gaussian-pulse center has {} coordinates, expected {d}", center.len()));
                }
                if !(*width > 0.0) {
                    return Err(format!("gaussian-pulse width must be positive, got {width}"));
                }
            }
            Profile::PlaneWave { wavevector, .. } if wavevector.len() != d => {
                return Err(format!("plane-wave wavevector has {} entries, expected {d}", wavevector.len()));
            }
            Profile::Ramp { axis, .. } if *axis >= d => {
                return Err(format!("ramp axis {axis} out of range for dimension {d}"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether every numeric parameter is finite.
    pub fn is_finite(&self) -> bool {
        let all = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Profile::Constant { value } => all(value),
            Profile::GaussianPulse { amplitude, center, width } => all(amplitude) && all(center) && width.is_finite(),
            Profile::PlaneWave { amplitude, wavevector, phase } => all(amplitude) && all(wavevector) && phase.is_finite(),
            Profile::Ramp { amplitude, .. } | Profile::Noise { amplitude } => all(amplitude),
        }
    }

    /// Deterministic evaluation at `x` (noise evaluates to zero here).
    pub fn eval(&self, x: [f64; 2], len: [f64; 2], out: &mut [f64]) {
        match self {
            Profile::Constant { value } => out.iter_mut().zip(value).for_each(|(o, v)| *o += v),
            Profile::GaussianPulse { amplitude, center, width } => {
                let r2: f64 = center.iter().enumerate().map(|(a, c)| (x[a] - c).powi(2)).sum();
                let g = (-r2 / (2.0 * width * width)).exp();
                out.iter_mut().zip(amplitude).for_each(|(o, a)| *o += a * g);
            }
            Profile::PlaneWave { amplitude, wavevector, phase } => {
                let arg: f64 = wavevector.iter().enumerate().map(|(a, k)| k * x[a]).sum::<f64>() + phase;
                let c = arg.cos();
                out.iter_mut().zip(amplitude).for_each(|(o, a)| *o += a * c);
            }
            Profile::Ramp { amplitude, axis } => {
                let s = x[*axis] / len[*axis];
                out.iter_mut().zip(amplitude).for_each(|(o, a)| *o += a * s);
            }
            Profile::Noise { .. } => {}
        }
    }
}

/// Sums `profiles` into a field with `ncomp` components; noise draws from `seed`.
pub fn realize<T: Real>(grid: &Grid<T>, ncomp: usize, profiles: &[Profile], seed: u64) -> Field<T> {
    let len = [grid.length(0).to64(), if grid.d() == 2 { grid.length(1).to64() } else { 1.0 }];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Field::zeros(grid, ncomp);
    let mut buf = vec![0.0; ncomp];
    for c in grid.interior_indices() {
        let xc = grid.center(c);
        let x = [xc[0].to64(), xc[1].to64()];
        buf.iter_mut().for_each(|b| *b = 0.0);
        for p in profiles {
            p.eval(x, len, &mut buf);
            if let Profile::Noise { amplitude } = p {
                for (b, a) in buf.iter_mut().zip(amplitude) {
                    *b += a * rng.gen_range(-1.0..1.0);
                }
            }
        }
        for (k, b) in buf.iter().enumerate() {
            f.set(k, c, T::of(*b));
        }
    }
    f
}

/// Time modulation of a load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Temporal {
    #[default]
    Constant,
    /// Linear rise from 0 to 1 over `duration`, then constant.
    Ramp { duration: f64 },
    /// Smooth bump `sin²(π(t − start)/duration)` on `[start, start + duration]`.
    Pulse {
        #[serde(default)]
        start: f64,
        duration: f64,
    },
    /// `sin(2π frequency t)`.
    Harmonic { frequency: f64 },
}

impl Temporal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Temporal::Constant => 1.0,
            Temporal::Ramp { duration } => {
                if *duration <= 0.0 {
                    1.0
                } else {
                    (t / duration).clamp(0.0, 1.0)
                }
            }
            Temporal::Pulse { start, duration } => {
                let s = (t - start) / duration;
                if (0.0..=1.0).contains(&s) {
                    (std::f64::consts::PI * s).sin().powi(2)
                } else {
                    0.0
                }
            }
            Temporal::Harmonic { frequency } => (2.0 * std::f64::consts::PI * frequency * t).sin(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Temporal::Pulse { duration, .. } if !(*duration > 0.0) => Err(format!("pulse duration must be positive, got {duration}")),
            Temporal::Ramp { duration } if *duration < 0.0 => Err(format!("ramp duration must be nonnegative, got {duration}")),
            _ => Ok(()),
        }
    }
}

/// One load contribution: a spatial profile times a time modulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadTerm {
    pub profile: Profile,
    #[serde(default)]
    pub time: Temporal,
}

/// Body force `f`, tangential traction `g` and boundary water flux `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Loads {
    #[serde(default)]
    pub f: Vec<LoadTerm>,
    #[serde(default)]
    pub g: Vec<LoadTerm>,
    #[serde(default)]
    pub h: Vec<LoadTerm>,
}

fn eval_terms(terms: &[LoadTerm], t: f64, x: [f64; 2], len: [f64; 2], out: &mut [f64]) {
    let mut buf = vec![0.0; out.len()];
    for term in terms {
        buf.iter_mut().for_each(|b| *b = 0.0);
        term.profile.eval(x, len, &mut buf);
        let s = term.time.eval(t);
        out.iter_mut().zip(&buf).for_each(|(o, b)| *o += s * b);
    }
}

impl Loads {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_empty() && self.g.is_empty() && self.h.is_empty()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, terms, n) in [("f", &self.f, d), ("g", &self.g, d), ("h", &self.h, 1)] {
            for term in terms {
                if matches!(term.profile, Profile::Noise { .. }) {
                    return Err(Error::Config(format!("load {name}: noise profiles are only allowed for initial data")));
                }
                term.profile.validate(n, d).map_err(|m| Error::Config(format!("load {name}: {m}")))?;
                term.time.validate().map_err(|m| Error::Config(format!("load {name}: {m}")))?;
            }
        }
        Ok(())
    }

    pub fn body_force(&self, t: f64, x: [f64; 2], len: [f64; 2]) -> [f64; 2] {
        let mut o = [0.0; 2];
        eval_terms(&self.f, t, x, len, &mut o);
        o
    }

    pub fn traction(&self, t: f64, x: [f64; 2], len: [f64; 2]) -> [f64; 2] {
        let mut o = [0.0; 2];
        eval_terms(&self.g, t, x, len, &mut o);
        o
    }

    pub fn flux(&self, t: f64, x: [f64; 2], len: [f64; 2]) -> f64 {
        let mut o = [0.0];
        eval_terms(&self.h, t, x, len, &mut o);
        o[0]
    }
}

/// Simpson average of `f` over `[t0, t1]`.
pub fn step_average<const N: usize>(t0: f64, t1: f64, f: impl Fn(f64) -> [f64; N]) -> [f64; N] {
    let (a, m, b) = (f(t0), f(0.5 * (t0 + t1)), f(t1));
    let mut o = [0.0; N];
    for i in 0..N {
        o[i] = (a[i] + 4.0 * m[i] + b[i]) / 6.0;
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dim;

    #[test]
    fn profile_values() {
        let len = [1.0, 1.0];
        let mut o = [0.0; 2];
        Profile::GaussianPulse { amplitude: vec![2.0, 0.0], center: vec![0.5, 0.5], width: 0.1 }.eval([0.5, 0.5], len, &mut o);
        assert_eq!(o, [2.0, 0.0]);
        let mut o = [0.0];
        Profile::Ramp { amplitude: vec![3.0], axis: 1 }.eval([0.2, 0.25], len, &mut o);
        assert_eq!(o, [0.75]);
        assert!(Profile::Ramp { amplitude: vec![3.0], axis: 1 }.validate(1, 1).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let g = Grid::<f64>::boxed(Dim::Two, 6, 1.0).unwrap();
        let p = [Profile::Noise { amplitude: vec![1.0] }];
        assert_eq!(realize(&g, 1, &p, 7), realize(&g, 1, &p, 7));
        assert_ne!(realize(&g, 1, &p, 7), realize(&g, 1, &p, 8));
    }

    #[test]
    fn temporal_shapes() {
        assert_eq!(Temporal::Ramp { duration: 2.0 }.eval(1.0), 0.5);
        assert_eq!(Temporal::Pulse { start: 1.0, duration: 2.0 }.eval(2.0), 1.0);
        assert_eq!(Temporal::Pulse { start: 1.0, duration: 2.0 }.eval(3.5), 0.0);
        let avg = step_average(0.0, 1.0, |t| [t * t]);
        assert!((avg[0] - 1.0 / 3.0).abs() < 1e-15);
    }
}
