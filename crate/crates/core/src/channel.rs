//! Indoor mixed-office propagation: LoS/NLoS pathloss, LoS probability,
//! unit-mean Rayleigh power fading and the resulting link-gain table.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::scenario::{Device, Position, Topology};
use crate::{Error, Result};

/// LoS probability at the 6.5 m breakpoint, used to keep the far branch
/// continuous with the middle one.
pub fn los_breakpoint_constant() -> f64 {
    (-(6.5f64 - 1.2) / 4.7).exp()
}

/// LoS pathloss in dB for a 3D distance in meters and carrier in GHz.
pub fn pathloss_los(d_3d: f64, fc_ghz: f64) -> Result<f64> {
    check_pathloss_domain(d_3d, fc_ghz)?;
    Ok(32.4 + 17.3 * d_3d.log10() + 20.0 * fc_ghz.log10())
}

/// NLoS pathloss in dB.
pub fn pathloss_nlos(d_3d: f64, fc_ghz: f64) -> Result<f64> {
    check_pathloss_domain(d_3d, fc_ghz)?;
    Ok(32.4 + 31.9 * d_3d.log10() + 20.0 * fc_ghz.log10())
}

fn check_pathloss_domain(d_3d: f64, fc_ghz: f64) -> Result<()> {
    if !(d_3d > 0.0) || !d_3d.is_finite() {
        return Err(Error::Domain(format!("3D distance must be positive, got {d_3d}")));
    }
    if !(fc_ghz > 0.0) || !fc_ghz.is_finite() {
        return Err(Error::Domain(format!("carrier frequency must be positive, got {fc_ghz}")));
    }
    Ok(())
}

pub fn los_probability(d_2d: f64) -> Result<f64> {
    if !(d_2d >= 0.0) {
        return Err(Error::Domain(format!("2D distance must be non-negative, got {d_2d}")));
    }
    Ok(if d_2d < 1.2 {
        1.0
    } else if d_2d <= 6.5 {
        (-(d_2d - 1.2) / 4.7).exp()
    } else {
        los_breakpoint_constant() * (-(d_2d - 6.5) / 32.6).exp()
    })
}

/// One unit-mean exponential power-fading draw.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let x: f64 = Exp1.sample(rng);
    // Exp1 can return exactly zero with vanishing probability.
    x.max(f64::MIN_POSITIVE)
}

/// How the LoS/NLoS pathloss terms are combined for one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosState {
    /// Probability-weighted mixture of the two pathloss terms.
    Mixture,
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosMode {
    Mixture,
    /// Persistent per-link Bernoulli LoS draw.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingMode {
    Rayleigh,
    /// beta = 1 on every link (constructed scenarios).
    Pinned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub carrier_ghz: f64,
    pub coherence_us: u64,
    pub min_distance_m: f64,
    pub los_mode: LosMode,
    pub fading: FadingMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: 5.0,
            coherence_us: 100_000,
            min_distance_m: 0.5,
            los_mode: LosMode::Mixture,
            fading: FadingMode::Rayleigh,
        }
    }
}

/// Mean (pre-fading) power gain between two positions.
pub fn mean_gain(a: &Position, b: &Position, fc_ghz: f64, min_distance_m: f64, los: LosState) -> Result<f64> {
    let d_3d = a.distance_3d(b).max(min_distance_m);
    let d_2d = a.distance_2d(b);
    let g_los = 10f64.powf(-pathloss_los(d_3d, fc_ghz)? / 10.0);
    let g_nlos = 10f64.powf(-pathloss_nlos(d_3d, fc_ghz)? / 10.0);
    Ok(match los {
        LosState::Mixture => {
            let p = los_probability(d_2d)?;
            g_los * p + g_nlos * (1.0 - p)
        }
        LosState::Los => g_los,
        LosState::Nlos => g_nlos,
    })
}

/// Linear power gain of the link between `i` and `j` with fading draw `beta`.
pub fn link_gain(i: &Device, j: &Device, beta: f64, fc_ghz: f64, min_distance_m: f64, los: LosState) -> Result<f64> {
    if i.id == j.id {
        return Err(Error::Domain(format!("self link for device {}", i.id)));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("fading draw must be positive, got {beta}")));
    }
    Ok(mean_gain(&i.position, &j.position, fc_ghz, min_distance_m, los)? * beta)
}

/// Gains for every ordered device pair. The pathloss part is symmetric;
/// fading is drawn independently per ordered pair and per coherence interval.
#[derive(Debug, Clone)]
pub struct LinkGainTable {
    n: usize,
    mean: Vec<f64>,
    beta: Vec<f64>,
    gain: Vec<f64>,
    pub coherence_us: u64,
    pub carrier_ghz: f64,
    fading: FadingMode,
}

impl LinkGainTable {
    pub fn build<R: Rng + ?Sized>(topology: &Topology, config: &ChannelConfig, rng: &mut R) -> Result<Self> {
        let n = topology.len();
        let mut mean = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let los = match config.los_mode {
                    LosMode::Mixture => LosState::Mixture,
                    LosMode::Bernoulli => {
                        let a = &topology.devices[i].position;
                        let b = &topology.devices[j].position;
                        if rng.random::<f64>() < los_probability(a.distance_2d(b))? {
                            LosState::Los
                        } else {
                            LosState::Nlos
                        }
                    }
                };
                let g = mean_gain(
                    &topology.devices[i].position,
                    &topology.devices[j].position,
                    config.carrier_ghz,
                    config.min_distance_m,
                    los,
                )?;
                mean[i * n + j] = g;
                mean[j * n + i] = g;
            }
        }
        let mut table = Self {
            n,
            mean,
            beta: vec![1.0; n * n],
            gain: vec![0.0; n * n],
            coherence_us: config.coherence_us,
            carrier_ghz: config.carrier_ghz,
            fading: config.fading,
        };
        table.refresh(rng);
        Ok(table)
    }

    /// Table from explicit symmetric mean gains (row-major, diagonal ignored).
    pub fn from_mean_gains(n: usize, mean: Vec<f64>, fading: FadingMode) -> Result<Self> {
        if mean.len() != n * n {
            return Err(Error::ShapeMismatch { expected: n * n, actual: mean.len() });
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !(mean[i * n + j] > 0.0) {
                    return Err(Error::Domain(format!("gain ({i},{j}) must be positive")));
                }
            }
        }
        let gain = mean.clone();
        Ok(Self {
            n,
            mean,
            beta: vec![1.0; n * n],
            gain,
            coherence_us: 100_000,
            carrier_ghz: 5.0,
            fading,
        })
    }

    /// Re-samples fading on every ordered link.
    pub fn refresh<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * self.n + j;
                if i == j {
                    self.gain[k] = 0.0;
                    continue;
                }
                self.beta[k] = match self.fading {
                    FadingMode::Rayleigh => sample_fading(rng),
                    FadingMode::Pinned => 1.0,
                };
                self.gain[k] = self.mean[k] * self.beta[k];
            }
        }
    }

    #[inline]
    pub fn gain(&self, from: usize, to: usize) -> f64 {
        self.gain[from * self.n + to]
    }

    #[inline]
    pub fn mean_gain(&self, from: usize, to: usize) -> f64 {
        self.mean[from * self.n + to]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn fading(&self) -> FadingMode {
        self.fading
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_topology, Role, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pathloss_reference_points() {
        assert!((pathloss_los(1.0, 1.0).unwrap() - 32.4).abs() < 1e-12);
        assert!((pathloss_nlos(1.0, 1.0).unwrap() - 32.4).abs() < 1e-12);
        // 32.4 + 17.3 + 20 log10(5)
        assert!((pathloss_los(10.0, 5.0).unwrap() - 63.679_400_03).abs() < 1e-6);
        assert!((pathloss_los(100.0, 5.0).unwrap() - 80.979_400_03).abs() < 1e-6);
        assert!((pathloss_nlos(10.0, 5.0).unwrap() - 78.279_400_03).abs() < 1e-6);
    }

    #[test]
    fn pathloss_domain_errors() {
        assert!(pathloss_los(0.0, 5.0).is_err());
        assert!(pathloss_nlos(-1.0, 5.0).is_err());
        assert!(pathloss_los(1.0, 0.0).is_err());
    }

    #[test]
    fn nlos_dominates_los_beyond_one_meter() {
        for k in 0..200 {
            let d = 1.0 + k as f64 * 0.7;
            assert!(pathloss_nlos(d, 5.0).unwrap() >= pathloss_los(d, 5.0).unwrap());
        }
    }

    #[test]
    fn los_probability_branches() {
        assert_eq!(los_probability(1.0).unwrap(), 1.0);
        assert_eq!(los_probability(1.2).unwrap(), 1.0);
        assert!((los_probability(6.5).unwrap() - 0.323_791).abs() < 1e-6);
        assert!(los_probability(-0.1).is_err());
        let eps = 1e-8;
        let jump = (los_probability(6.5 - eps).unwrap() - los_probability(6.5 + eps).unwrap()).abs();
        assert!(jump < 1e-6);
    }

    #[test]
    fn fading_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_fading(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(draws.iter().all(|&x| x > 0.0));
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "var {var}");
    }

    fn dev(id: usize, x: f64) -> Device {
        Device::terminal(id, Role::Sta, Position::new(x, 0.0, 1.0), 0)
    }

    #[test]
    fn link_gain_close_range_is_pure_los() {
        let a = dev(0, 0.0);
        let b = dev(1, 1.0);
        let g = link_gain(&a, &b, 1.0, 5.0, 0.5, LosState::Mixture).unwrap();
        let expected = 10f64.powf(-pathloss_los(1.0, 5.0).unwrap() / 10.0);
        assert!((g - expected).abs() / expected < 1e-12);
        let half = link_gain(&a, &b, 0.5, 5.0, 0.5, LosState::Mixture).unwrap();
        assert_eq!(half, g * 0.5);
    }

    #[test]
    fn link_gain_coincident_devices_are_clamped() {
        let a = dev(0, 3.0);
        let b = dev(1, 3.0);
        let g = link_gain(&a, &b, 1.0, 5.0, 0.5, LosState::Mixture).unwrap();
        let expected = 10f64.powf(-pathloss_los(0.5, 5.0).unwrap() / 10.0);
        assert!((g - expected).abs() / expected < 1e-12);
        assert!(link_gain(&a, &a, 1.0, 5.0, 0.5, LosState::Mixture).is_err());
    }

    #[test]
    fn gain_table_refresh_is_seeded() {
        let topo = build_topology(&ScenarioConfig::desk(), 1).unwrap();
        let config = ChannelConfig::default();
        let a = LinkGainTable::build(&topo, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = LinkGainTable::build(&topo, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for i in 0..topo.len() {
            for j in 0..topo.len() {
                assert_eq!(a.gain(i, j), b.gain(i, j));
                assert_eq!(a.mean_gain(i, j), a.mean_gain(j, i));
                if i != j {
                    assert!(a.gain(i, j) > 0.0);
                }
            }
        }
    }

    #[test]
    fn pinned_fading_equals_mean() {
        let topo = build_topology(&ScenarioConfig::desk(), 1).unwrap();
        let config = ChannelConfig { fading: FadingMode::Pinned, ..ChannelConfig::default() };
        let t = LinkGainTable::build(&topo, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(t.gain(0, 1), t.mean_gain(0, 1));
    }
}
