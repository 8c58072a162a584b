//! Forward model: the normalized range-profile matrix `P(θ_i, f_l)` of a
//! scene of point scatterers.
//!
//! Sign convention: the simulator emits `e^{−j2k|r + v t − r^a|}` and every
//! imaging kernel multiplies by `e^{+j2k|…|}`, so backprojection at the true
//! `(r, v)` adds all samples in phase. The amplitude factor
//! `A = F²/|r − r^a|²` multiplies here and divides on the imaging side; both
//! evaluate it at the target's instantaneous position.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{moving_range, Acquisition, RadarConfig, SPEED_OF_LIGHT};
use crate::pattern::{AntennaPattern, Direction};
use crate::scene::{PointTarget, Scene};

/// `N_f × N_p` matrix, element `[l, i]` for frequency `f_l` and pulse `θ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeProfile {
    pub values: Array2<Complex64>,
    pub radar: RadarConfig,
}

/// Additive circular complex Gaussian receiver noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `E|n|²` per sample.
    pub power: f64,
    pub seed: u64,
}

impl RangeProfile {
    pub fn zeros(radar: &RadarConfig) -> Self {
        let n = radar.num_samples;
        RangeProfile {
            values: Array2::zeros((n, n)),
            radar: radar.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.radar.num_samples
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Elementwise conjugated inner product `Σ conj(self)·other`.
    pub fn inner(&self, other: &RangeProfile) -> Complex64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn add_noise(&mut self, noise: &NoiseSpec) {
        if noise.power <= 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let normal = Normal::new(0.0, (noise.power / 2.0).sqrt()).expect("finite sigma");
        for z in self.values.iter_mut() {
            *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }

    pub const MAGIC: &'static [u8; 4] = b"SARP";
    pub const HEADER_LEN: usize = 4 + 4 + 4 + 7 * 8;

    /// Little-endian `SARP` file: header then interleaved `(re, im)` f64
    /// pairs, frequency-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let r = &self.radar;
        let n = r.num_samples as u32;
        let mut buf = Vec::with_capacity(Self::HEADER_LEN + self.values.len() * 16);
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&n.to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
        for v in [
            r.freq_start(),
            r.freq_step(),
            r.theta_start,
            r.theta_step(),
            r.pulse_interval,
            r.radius,
            r.altitude,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for z in self.values.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; Self::HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &header[0..4] != Self::MAGIC {
            return Err(Error::Format("missing SARP magic".into()));
        }
        let u32_at = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap()) as usize;
        let f64_at = |k: usize| f64::from_le_bytes(header[k..k + 8].try_into().unwrap());
        let (nf, np) = (u32_at(4), u32_at(8));
        if nf != np || nf < 2 || !nf.is_power_of_two() || nf > 1 << 14 {
            return Err(Error::Format(format!(
                "unsupported dimensions {nf} × {np} (need equal powers of two)"
            )));
        }
        let (f_start, f_step) = (f64_at(12), f64_at(20));
        let (theta_start, theta_step) = (f64_at(28), f64_at(36));
        let bandwidth = f_step * (nf - 1) as f64;
        let radar = RadarConfig {
            radius: f64_at(52),
            altitude: f64_at(60),
            carrier_hz: f_start + bandwidth / 2.0,
            bandwidth_hz: bandwidth,
            num_samples: nf,
            pulse_interval: f64_at(44),
            aperture: theta_step * nf as f64,
            theta_start,
        };
        radar
            .validate()
            .map_err(|e| Error::Format(format!("header: {e}")))?;

        let mut data = vec![0u8; nf * np * 16];
        r.read_exact(&mut data)
            .map_err(|_| Error::Format("truncated sample data".into()))?;
        let samples: Vec<Complex64> = data
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect();
        let values = Array2::from_shape_vec((nf, np), samples).expect("length checked");
        let profile = RangeProfile { values, radar };
        if !profile.is_finite() {
            return Err(Error::Format("non-finite samples".into()));
        }
        Ok(profile)
    }
}

/// `F²(φ, f)/|r − r^a|²` with `φ` the direction from `antenna` to `r`.
pub fn amplitude_factor(
    r: [f64; 3],
    antenna: [f64; 3],
    freq_hz: f64,
    pattern: &dyn AntennaPattern,
) -> Complex64 {
    let d = [r[0] - antenna[0], r[1] - antenna[1], r[2] - antenna[2]];
    let dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let f = pattern.gain(Direction::from_delta(d[0], d[1], d[2]), freq_hz);
    f * f / dist2
}

/// Echo of `targets` for every sample of `acq`.
///
/// Frequencies must be uniformly spaced: the phase `e^{−j2k_l d}` is advanced
/// by a constant rotation per frequency step.
pub fn simulate_targets(
    targets: &[PointTarget],
    radar: &RadarConfig,
    acq: &Acquisition,
    pattern: &dyn AntennaPattern,
) -> RangeProfile {
    let n = radar.num_samples;
    let k0 = acq.wavenumbers[0];
    let dk = 2.0 * std::f64::consts::PI * radar.freq_step() / SPEED_OF_LIGHT;
    let columns: Vec<Vec<Complex64>> = (0..acq.num_pulses())
        .into_par_iter()
        .map(|i| {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            accumulate_column(&mut col, targets, acq, i, k0, dk, pattern);
            col
        })
        .collect();
    let mut values = Array2::zeros((n, n));
    for (i, col) in columns.iter().enumerate() {
        for (l, z) in col.iter().enumerate() {
            values[[l, i]] = *z;
        }
    }
    RangeProfile {
        values,
        radar: radar.clone(),
    }
}

#[derive(Clone, Copy)]
struct Phasor {
    z: Complex64,
    step: Complex64,
}

impl Phasor {
    fn new(t: &PointTarget, acq: &Acquisition, i: usize, k0: f64, dk: f64) -> (Self, [f64; 3]) {
        let a = acq.antenna[i];
        let time = acq.times[i];
        let d = moving_range(t.position, t.velocity, time, a);
        let pos = [
            t.position[0] + t.velocity[0] * time,
            t.position[1] + t.velocity[1] * time,
            0.0,
        ];
        let base = Complex64::from_polar(t.amplitude, t.phase) / (d * d);
        let z = base * Complex64::cis(-2.0 * k0 * d);
        let step = Complex64::cis(-2.0 * dk * d);
        (Phasor { z, step }, pos)
    }
}

fn accumulate_column(
    col: &mut [Complex64],
    targets: &[PointTarget],
    acq: &Acquisition,
    i: usize,
    k0: f64,
    dk: f64,
    pattern: &dyn AntennaPattern,
) {
    if !pattern.is_isotropic() {
        let a = acq.antenna[i];
        for t in targets {
            let (mut ph, pos) = Phasor::new(t, acq, i, k0, dk);
            let delta = [pos[0] - a[0], pos[1] - a[1], -a[2]];
            let mut dir = Direction::from_delta(delta[0], delta[1], delta[2]);
            dir.azimuth += acq.azimuth_offset;
            for (l, c) in col.iter_mut().enumerate() {
                let f = pattern.gain(dir, acq.freqs[l]);
                *c += ph.z * f * f;
                ph.z *= ph.step;
            }
        }
        return;
    }
    // Four independent phasor chains per pass keep the multiplier busy.
    let zero = Phasor {
        z: Complex64::new(0.0, 0.0),
        step: Complex64::new(1.0, 0.0),
    };
    for chunk in targets.chunks(4) {
        let mut p: [Phasor; 4] = [0, 1, 2, 3].map(|k| match chunk.get(k) {
            Some(t) => Phasor::new(t, acq, i, k0, dk).0,
            None => zero,
        });
        for c in col.iter_mut() {
            *c += (p[0].z + p[1].z) + (p[2].z + p[3].z);
            for q in p.iter_mut() {
                q.z *= q.step;
            }
        }
    }
}

/// Forward signature of a single scatterer: the matched response used for
/// cleaning. Identical to what [`simulate_targets`] produces for it.
pub fn target_signature(
    target: &PointTarget,
    radar: &RadarConfig,
    acq: &Acquisition,
    pattern: &dyn AntennaPattern,
) -> RangeProfile {
    simulate_targets(std::slice::from_ref(target), radar, acq, pattern)
}

/// Echo of a whole scene: point targets, generated clutter and optional
/// receiver noise.
pub fn simulate(
    scene: &Scene,
    radar: &RadarConfig,
    pattern: &dyn AntennaPattern,
) -> Result<RangeProfile> {
    radar.validate()?;
    let acq = Acquisition::new(radar);
    let scatterers = scene.scatterers(radar.num_samples)?;
    let mut profile = simulate_targets(&scatterers, radar, &acq, pattern);
    if let Some(noise) = &scene.noise {
        profile.add_noise(noise);
    }
    Ok(profile)
}
