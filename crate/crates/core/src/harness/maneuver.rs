use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Section;
use crate::control::FlightReference;
use crate::dynamics::{AugmentedInput, State};
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::planner::DesiredTrajectory;

/// Peak commanded acceleration a sinusoid may demand [m/s^2].
pub const ACCEL_LIMIT: f64 = 3.0;
/// Highest sinusoid frequency accepted [Hz].
pub const MAX_FREQUENCY: f64 = 0.5;
/// Every maneuver starts from hover here (NED, 1 m up).
pub const START: Vector3<f64> = Vector3::new(0.0, 0.0, -1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManeuverKind {
    SinusoidXY,
    SinusoidXZ,
    SinusoidYZ,
    YawSpin,
    RandomExcitation,
}

impl ManeuverKind {
    pub const ALL: [ManeuverKind; 5] = [
        ManeuverKind::SinusoidXY,
        ManeuverKind::SinusoidXZ,
        ManeuverKind::SinusoidYZ,
        ManeuverKind::YawSpin,
        ManeuverKind::RandomExcitation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ManeuverKind::SinusoidXY => "sinusoid_xy",
            ManeuverKind::SinusoidXZ => "sinusoid_xz",
            ManeuverKind::SinusoidYZ => "sinusoid_yz",
            ManeuverKind::YawSpin => "yaw_spin",
            ManeuverKind::RandomExcitation => "random_excitation",
        }
    }

    /// Axes (first, second) swept by a planar sinusoid.
    fn plane(&self) -> Option<(usize, usize)> {
        match self {
            ManeuverKind::SinusoidXY => Some((0, 1)),
            ManeuverKind::SinusoidXZ => Some((0, 2)),
            ManeuverKind::SinusoidYZ => Some((1, 2)),
            _ => None,
        }
    }
}

impl fmt::Display for ManeuverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManeuverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ManeuverKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown maneuver kind `{s}`")))
    }
}

/// One training flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    /// Sinusoid amplitude [m].
    pub amplitude: f64,
    /// Sinusoid frequency [Hz].
    pub frequency: f64,
    pub duration: f64,
    /// YawSpin only: steady rate after the ramp-in [rad/s].
    pub yaw_rate: f64,
    /// RandomExcitation only: noise stream and, unless `heading` is set,
    /// the hover heading.
    pub seed: u64,
    /// RandomExcitation only.
    pub heading: Option<f64>,
}

impl ManeuverSpec {
    fn base(kind: ManeuverKind, duration: f64) -> Self {
        ManeuverSpec {
            kind,
            amplitude: 0.0,
            frequency: 0.0,
            duration,
            yaw_rate: 0.0,
            seed: 0,
            heading: None,
        }
    }

    pub fn sinusoid(kind: ManeuverKind, amplitude: f64, frequency: f64, duration: f64) -> Self {
        ManeuverSpec {
            amplitude,
            frequency,
            ..Self::base(kind, duration)
        }
    }

    pub fn yaw_spin(yaw_rate: f64, duration: f64) -> Self {
        ManeuverSpec {
            yaw_rate,
            ..Self::base(ManeuverKind::YawSpin, duration)
        }
    }

    pub fn random_excitation(seed: u64, heading: Option<f64>, duration: f64) -> Self {
        ManeuverSpec {
            seed,
            heading,
            ..Self::base(ManeuverKind::RandomExcitation, duration)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(format!("maneuver duration must be positive, got {}", self.duration)));
        }
        if self.kind.plane().is_some() {
            if !(self.amplitude >= 0.0 && self.frequency >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sinusoid needs non-negative amplitude and frequency, got {} m at {} Hz",
                    self.amplitude, self.frequency
                )));
            }
            if self.frequency > MAX_FREQUENCY {
                return Err(Error::EnvelopeViolation(format!(
                    "sinusoid frequency {} Hz exceeds {MAX_FREQUENCY} Hz",
                    self.frequency
                )));
            }
            let peak = self.amplitude * (TAU * self.frequency).powi(2);
            if peak > ACCEL_LIMIT {
                return Err(Error::EnvelopeViolation(format!(
                    "sinusoid demands {peak:.3} m/s^2, limit is {ACCEL_LIMIT}"
                )));
            }
        }
        if !self.yaw_rate.is_finite() || self.heading.is_some_and(|h| !h.is_finite()) {
            return Err(Error::InvalidArgument("yaw rate and heading must be finite".into()));
        }
        Ok(())
    }

    /// Hover heading of a RandomExcitation flight.
    pub fn excitation_heading(&self) -> f64 {
        self.heading.map(wrap_angle).unwrap_or_else(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.random_range(-PI..PI)
        })
    }

    /// Reads one `[maneuver]` section.
    pub fn from_section(section: &Section) -> Result<Self> {
        let kind: ManeuverKind = match section.get("kind") {
            Some(e) => e.value.parse().map_err(|err: Error| Error::config(e.line, err.to_string()))?,
            None => return Err(Error::config(section.line, "[maneuver] needs a `kind`")),
        };
        let mut spec = Self::base(kind, 0.0);
        for e in &section.entries {
            match e.key.as_str() {
                "kind" => {}
                "amplitude" => spec.amplitude = e.f64()?,
                "frequency" => spec.frequency = e.f64()?,
                "duration" => spec.duration = e.f64()?,
                "yaw_rate" => spec.yaw_rate = e.f64()?,
                "seed" => spec.seed = e.parse()?,
                "heading" => spec.heading = Some(e.f64()?),
                _ => return Err(e.unknown(&section.name)),
            }
        }
        spec.validate().map_err(|err| Error::config(section.line, err.to_string()))?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let mut kv = vec![("kind", self.kind.to_string()), ("duration", self.duration.to_string())];
        match self.kind {
            ManeuverKind::YawSpin => kv.push(("yaw_rate", self.yaw_rate.to_string())),
            ManeuverKind::RandomExcitation => {
                kv.push(("seed", self.seed.to_string()));
                if let Some(h) = self.heading {
                    kv.push(("heading", h.to_string()));
                }
            }
            _ => {
                kv.push(("amplitude", self.amplitude.to_string()));
                kv.push(("frequency", self.frequency.to_string()));
            }
        }
        kv
    }
}

fn steps(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(1)
}

/// Seconds over which a yaw spin eases up to its rate.
pub const SPIN_RAMP: f64 = 2.0;

/// Heading and yaw rate of a spin whose rate follows a smoothstep from
/// rest to `rate` over [`SPIN_RAMP`] and then stays constant.
fn spin_profile(rate: f64, t: f64) -> (f64, f64) {
    if t >= SPIN_RAMP {
        return (rate * (t - 0.5 * SPIN_RAMP), rate);
    }
    let x = t / SPIN_RAMP;
    (rate * SPIN_RAMP * (x.powi(3) - 0.5 * x.powi(4)), rate * x * x * (3.0 - 2.0 * x))
}

/// Analytic desired trajectory sampled every `dt`. Sinusoids start at rest
/// on the offset-cosine branch so position and velocity are continuous at
/// t = 0.
pub fn generate_maneuver(spec: &ManeuverSpec, dt: f64) -> Result<DesiredTrajectory> {
    spec.validate()?;
    let n = steps(spec.duration, dt);
    let states = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            match spec.kind {
                ManeuverKind::YawSpin => {
                    let (angle, rate) = spin_profile(spec.yaw_rate, t);
                    let mut s = State::hover_at(START, wrap_angle(angle));
                    s.omega.z = rate;
                    s
                }
                ManeuverKind::RandomExcitation => State::hover_at(START, spec.excitation_heading()),
                planar => {
                    let (i, j) = planar.plane().expect("planar kind");
                    let w = TAU * spec.frequency;
                    let (sin, cos) = (w * t).sin_cos();
                    let mut s = State::hover_at(START, 0.0);
                    s.p[i] += spec.amplitude * sin;
                    s.p[j] += spec.amplitude * (1.0 - cos);
                    s.v[i] = spec.amplitude * w * cos;
                    s.v[j] = spec.amplitude * w * sin;
                    s
                }
            }
        })
        .collect();
    DesiredTrajectory::new(states, dt)
}

/// Sinusoid in the XY plane while the heading ramps linearly through
/// `yaw_turns` full turns over the flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidYaw {
    pub amplitude: f64,
    pub frequency: f64,
    pub duration: f64,
    pub yaw_turns: f64,
}

impl Default for SinusoidYaw {
    fn default() -> Self {
        SinusoidYaw {
            amplitude: 0.5,
            frequency: 0.2,
            duration: 20.0,
            yaw_turns: 1.0,
        }
    }
}

impl SinusoidYaw {
    pub fn generate(&self, dt: f64) -> Result<DesiredTrajectory> {
        let planar = ManeuverSpec::sinusoid(ManeuverKind::SinusoidXY, self.amplitude, self.frequency, self.duration);
        let base = generate_maneuver(&planar, dt)?;
        let rate = TAU * self.yaw_turns / self.duration;
        let states = base
            .states
            .into_iter()
            .enumerate()
            .map(|(k, mut s)| {
                s.zeta.z = wrap_angle(rate * k as f64 * dt);
                s.omega.z = rate;
                s
            })
            .collect();
        DesiredTrajectory::new(states, dt)
    }
}

/// Standard deviations of the band-limited perturbations a
/// RandomExcitation flight adds to the hover command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationLevels {
    pub thrust: f64,
    pub tilt: f64,
    pub tilt_rate: f64,
    /// Low-pass time constant of each of the two cascaded filter stages [s].
    pub time_constant: f64,
    /// Smooth ramp in and out at the ends of the flight [s].
    pub taper: f64,
}

impl Default for ExcitationLevels {
    fn default() -> Self {
        ExcitationLevels {
            thrust: 0.03,
            tilt: 0.12,
            tilt_rate: 0.15,
            time_constant: 0.3,
            taper: 1.0,
        }
    }
}

/// Unit-variance low-passed Gaussian noise, tapered to zero at both ends.
fn smoothed_noise(rng: &mut ChaCha8Rng, n: usize, dt: f64, levels: &ExcitationLevels) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let alpha = (dt / levels.time_constant).min(1.0);
    let (mut a, mut b) = (0.0, 0.0);
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            a += alpha * (normal.sample(rng) - a);
            b += alpha * (a - b);
            b
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let std = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if std > 0.0 { 1.0 / std } else { 0.0 };
    let ramp = |t: f64| {
        let x = (t / levels.taper).clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    };
    let end = (n.saturating_sub(1)) as f64 * dt;
    raw.iter()
        .enumerate()
        .map(|(k, x)| {
            let t = k as f64 * dt;
            (x - mean) * scale * ramp(t).min(ramp(end - t))
        })
        .collect()
}

/// Flight reference for a training maneuver: feedback on the desired
/// trajectory around hover thrust, plus seeded excitation for
/// RandomExcitation flights.
pub fn maneuver_reference(
    spec: &ManeuverSpec,
    desired: &DesiredTrajectory,
    hover_thrust: f64,
    levels: &ExcitationLevels,
) -> FlightReference {
    let mut reference = FlightReference::model_free(desired, hover_thrust);
    if spec.kind != ManeuverKind::RandomExcitation {
        return reference;
    }
    let n = reference.inputs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_e4c1_7a71_0000);
    let channels: [(f64, fn(&mut AugmentedInput) -> &mut f64); 5] = [
        (levels.thrust, |u| &mut u.thrust),
        (levels.tilt, |u| &mut u.zeta_des.x),
        (levels.tilt, |u| &mut u.zeta_des.y),
        (levels.tilt_rate, |u| &mut u.omega_des.x),
        (levels.tilt_rate, |u| &mut u.omega_des.y),
    ];
    for (sigma, field) in channels {
        let signal = smoothed_noise(&mut rng, n, desired.dt, levels);
        for (u, x) in reference.inputs.iter_mut().zip(signal) {
            *field(u) += sigma * x;
        }
    }
    reference
}

/// Named training corpus: `Reduced` totals 600 s, `Full` 2400 s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corpus {
    /// No built-in maneuvers.
    None,
    Reduced,
    Full,
}

impl FromStr for Corpus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Corpus::None),
            "reduced" => Ok(Corpus::Reduced),
            "full" | "default" => Ok(Corpus::Full),
            other => Err(Error::InvalidArgument(format!("unknown corpus `{other}` (none | reduced | full)"))),
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corpus::None => "none",
            Corpus::Reduced => "reduced",
            Corpus::Full => "full",
        })
    }
}

/// One 600 s block: planar sinusoids (240 s), yaw spins (60 s) and
/// hover excitation at evenly spread headings (300 s). Repeats vary the
/// amplitudes, frequencies, spin rates and excitation seeds.
fn block(repeat: usize) -> Vec<ManeuverSpec> {
    let r = repeat as f64;
    let mut suite = Vec::new();
    for kind in [ManeuverKind::SinusoidXY, ManeuverKind::SinusoidXZ, ManeuverKind::SinusoidYZ] {
        suite.push(ManeuverSpec::sinusoid(kind, 0.5 - 0.05 * r, 0.2 + 0.01 * r, 40.0));
        suite.push(ManeuverSpec::sinusoid(kind, 0.25 + 0.05 * r, 0.3 - 0.02 * r, 40.0));
    }
    suite.push(ManeuverSpec::yaw_spin(0.6 + 0.2 * r, 30.0));
    suite.push(ManeuverSpec::yaw_spin(-1.0 - 0.2 * r, 30.0));
    let count = 10;
    for k in 0..count {
        let heading = wrap_angle(TAU * (k as f64 + 0.25 * r) / count as f64);
        let seed = 1000 * (repeat as u64 + 1) + k as u64;
        suite.push(ManeuverSpec::random_excitation(seed, Some(heading), 30.0));
    }
    suite
}

pub fn default_suite(corpus: Corpus) -> Vec<ManeuverSpec> {
    let repeats = match corpus {
        Corpus::None => 0,
        Corpus::Reduced => 1,
        Corpus::Full => 4,
    };
    (0..repeats).flat_map(block).collect()
}

pub fn suite_duration(suite: &[ManeuverSpec]) -> f64 {
    suite.iter().map(|s| s.duration).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    #[test]
    fn sinusoid_velocity_is_the_position_derivative() {
        let spec = ManeuverSpec::sinusoid(ManeuverKind::SinusoidXZ, 0.5, 0.2, 30.0);
        let d = generate_maneuver(&spec, 0.01).unwrap();
        assert_eq!(d.horizon(), 3000);
        for k in [1, 700, 2999] {
            let fd = (d.states[k + 1].p - d.states[k - 1].p) / 0.02;
            assert!((fd - d.states[k].v).norm() < 1e-4 * 0.5);
            assert_eq!(d.states[k].p.y, 0.0);
            assert_eq!(d.states[k].zeta, Vector3::zeros());
        }
        let t = 7.3;
        assert!((d.states[730].p.x - 0.5 * (TAU * 0.2 * t).sin()).abs() < 1e-12);
    }

    #[test]
    fn yaw_spin_wraps_and_holds_position() {
        let d = generate_maneuver(&ManeuverSpec::yaw_spin(0.5, 20.0), 0.01).unwrap();
        for s in &d.states {
            assert_eq!(s.p, START);
            assert!(s.yaw() > -PI && s.yaw() <= PI);
        }
        assert!((d.states[1000].yaw() - wrap_angle(0.5 * (10.0 - 0.5 * SPIN_RAMP))).abs() < 1e-12);
        assert_eq!(d.states[0].omega.z, 0.0);
        for k in 1..600 {
            let fd = angle_rate(&d, k);
            assert!((fd - d.states[k].omega.z).abs() < 1e-4, "k {k}: {fd} vs {}", d.states[k].omega.z);
        }
    }

    fn angle_rate(d: &DesiredTrajectory, k: usize) -> f64 {
        crate::math::angle_diff(d.states[k + 1].yaw(), d.states[k - 1].yaw()) / (2.0 * d.dt)
    }

    #[test]
    fn zero_amplitude_is_hover() {
        let d = generate_maneuver(&ManeuverSpec::sinusoid(ManeuverKind::SinusoidXY, 0.0, 0.3, 5.0), 0.01).unwrap();
        assert!(d.states.iter().all(|s| *s == State::hover_at(START, 0.0)));
    }

    #[test]
    fn envelope_is_enforced() {
        let fast = ManeuverSpec::sinusoid(ManeuverKind::SinusoidXY, 1.0, 0.45, 10.0);
        assert!(matches!(generate_maneuver(&fast, 0.01), Err(Error::EnvelopeViolation(_))));
        let high = ManeuverSpec::sinusoid(ManeuverKind::SinusoidXY, 0.01, 0.6, 10.0);
        assert!(matches!(generate_maneuver(&high, 0.01), Err(Error::EnvelopeViolation(_))));
        assert!(generate_maneuver(&ManeuverSpec::yaw_spin(1.0, 0.0), 0.01).is_err());
    }

    #[test]
    fn suites_have_the_advertised_length() {
        assert!((suite_duration(&default_suite(Corpus::Reduced)) - 600.0).abs() < 1e-9);
        assert!((suite_duration(&default_suite(Corpus::Full)) - 2400.0).abs() < 1e-9);
        for spec in default_suite(Corpus::Full) {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn excitation_is_seeded_and_tapered() {
        let spec = ManeuverSpec::random_excitation(3, None, 10.0);
        let d = generate_maneuver(&spec, 0.01).unwrap();
        let levels = ExcitationLevels::default();
        let a = maneuver_reference(&spec, &d, 0.3, &levels);
        let b = maneuver_reference(&spec, &d, 0.3, &levels);
        assert_eq!(a, b);
        assert_eq!(a.inputs[0], AugmentedInput::hover(0.3, spec.excitation_heading()));
        assert_eq!(*a.inputs.last().unwrap(), AugmentedInput::hover(0.3, spec.excitation_heading()));
        let mid: Vec<f64> = a.inputs[200..800].iter().map(|u| u.zeta_des.x).collect();
        let rms = (mid.iter().map(|x| x * x).sum::<f64>() / mid.len() as f64).sqrt();
        assert!(rms > 0.3 * levels.tilt && rms < 2.0 * levels.tilt, "rms {rms}");
        assert!(a.inputs.iter().all(|u| u.omega_des.z == 0.0 && u.zeta_des.z == spec.excitation_heading()));
    }

    #[test]
    fn maneuver_sections_parse() {
        let cfg = ConfigFile::parse("[maneuver]\nkind = yaw_spin\nyaw_rate = -1\nduration = 5\n").unwrap();
        let spec = ManeuverSpec::from_section(cfg.section("maneuver").unwrap()).unwrap();
        assert_eq!(spec, ManeuverSpec::yaw_spin(-1.0, 5.0));
        let bad = ConfigFile::parse("[maneuver]\nkind = yaw_spin\nspeed = 1\nduration = 5\n").unwrap();
        let err = ManeuverSpec::from_section(bad.section("maneuver").unwrap()).unwrap_err();
        assert!(err.to_string().contains("speed"));
    }

    #[test]
    fn sinusoid_yaw_ramps_heading_once() {
        let d = SinusoidYaw::default().generate(0.01).unwrap();
        assert_eq!(d.horizon(), 2000);
        assert!((d.states[1000].yaw() - PI).abs() < 1e-9);
        assert!(d.states.iter().all(|s| (s.omega.z - TAU / 20.0).abs() < 1e-12));
    }
}
