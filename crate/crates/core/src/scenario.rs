//! Indoor single-floor coexistence topology: gNBs and APs at fixed
//! positions, UEs and STAs dropped uniformly and attached to the closest
//! base of their own network.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Height of gNBs and APs in meters.
pub const BASE_HEIGHT_M: f64 = 3.0;
/// Height of UEs and STAs in meters.
pub const DEVICE_HEIGHT_M: f64 = 1.0;
pub const DEVICE_TX_POWER_DBM: f64 = 18.0;
pub const BASE_TX_POWER_DBM: f64 = 23.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance_2d(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn distance_3d(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Network {
    Wifi,
    Nru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Sta,
    Ue,
    Ap,
    Gnb,
}

impl Role {
    pub fn network(self) -> Network {
        match self {
            Role::Sta | Role::Ap => Network::Wifi,
            Role::Ue | Role::Gnb => Network::Nru,
        }
    }

    pub fn is_base(self) -> bool {
        matches!(self, Role::Ap | Role::Gnb)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Sta => "STA",
            Role::Ue => "UE",
            Role::Ap => "AP",
            Role::Gnb => "GNB",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: usize,
    pub role: Role,
    pub position: Position,
    pub tx_power_dbm: f64,
    /// Serving base for STAs and UEs; `None` for APs and gNBs.
    pub associated_base: Option<usize>,
}

impl Device {
    pub fn base(id: usize, role: Role, position: Position) -> Self {
        Self {
            id,
            role,
            position,
            tx_power_dbm: BASE_TX_POWER_DBM,
            associated_base: None,
        }
    }

    pub fn terminal(id: usize, role: Role, position: Position, base: usize) -> Self {
        Self {
            id,
            role,
            position,
            tx_power_dbm: DEVICE_TX_POWER_DBM,
            associated_base: Some(base),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub floor_width_m: f64,
    pub floor_depth_m: f64,
    /// (x, y) of each gNB; z is fixed at [`BASE_HEIGHT_M`].
    pub gnb_positions: Vec<(f64, f64)>,
    pub ap_positions: Vec<(f64, f64)>,
    /// UEs per gNB and STAs per AP.
    pub devices_per_cell: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            floor_width_m: 120.0,
            floor_depth_m: 50.0,
            gnb_positions: vec![(20.0, 20.0), (60.0, 20.0), (100.0, 20.0)],
            ap_positions: vec![(20.0, 30.0), (60.0, 30.0), (100.0, 30.0)],
            devices_per_cell: 5,
        }
    }
}

impl ScenarioConfig {
    /// One cell per network with two terminals each, on a 40 m x 50 m slice
    /// of the floor around the first gNB/AP pair.
    pub fn desk() -> Self {
        Self {
            floor_width_m: 40.0,
            floor_depth_m: 50.0,
            gnb_positions: vec![(20.0, 20.0)],
            ap_positions: vec![(20.0, 30.0)],
            devices_per_cell: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub devices: Vec<Device>,
    pub floor_width_m: f64,
    pub floor_depth_m: f64,
    pub cells_per_network: usize,
    pub devices_per_cell: usize,
    pub rng_seed: u64,
}

impl Topology {
    /// Assembles a topology from explicit devices (constructed test
    /// geometries). Ids must equal their index.
    pub fn from_devices(devices: Vec<Device>, floor_width_m: f64, floor_depth_m: f64) -> Result<Self> {
        for (idx, dev) in devices.iter().enumerate() {
            if dev.id != idx {
                return Err(Error::Config(format!("device at index {idx} has id {}", dev.id)));
            }
            check_on_floor(&dev.position, floor_width_m, floor_depth_m)?;
            match (dev.role.is_base(), dev.associated_base) {
                (true, Some(_)) => {
                    return Err(Error::Config(format!("base {} cannot have a serving base", dev.id)))
                }
                (false, None) => {
                    return Err(Error::Config(format!("terminal {} has no serving base", dev.id)))
                }
                (false, Some(b)) => {
                    let ok = devices
                        .get(b)
                        .map(|base| base.role.is_base() && base.role.network() == dev.role.network())
                        .unwrap_or(false);
                    if !ok {
                        return Err(Error::Config(format!(
                            "terminal {} is attached to {b}, which is not a base of its network",
                            dev.id
                        )));
                    }
                }
                (true, None) => {}
            }
        }
        let cells = devices.iter().filter(|d| d.role == Role::Gnb).count();
        Ok(Self {
            devices,
            floor_width_m,
            floor_depth_m,
            cells_per_network: cells,
            devices_per_cell: 0,
            rng_seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn ids_with_role(&self, role: Role) -> impl Iterator<Item = usize> + '_ {
        self.devices.iter().filter(move |d| d.role == role).map(|d| d.id)
    }

    /// Terminals served by `base`, ascending id.
    pub fn terminals_of(&self, base: usize) -> Vec<usize> {
        self.devices
            .iter()
            .filter(|d| d.associated_base == Some(base))
            .map(|d| d.id)
            .collect()
    }

    /// Metadata block `device_id,role,x,y,z,base_id` (empty base id for bases).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("device_id,role,x,y,z,base_id\n");
        for d in &self.devices {
            let base = d.associated_base.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.3},{}",
                d.id,
                d.role.as_str(),
                d.position.x,
                d.position.y,
                d.position.z,
                base
            );
        }
        out
    }
}

fn check_on_floor(p: &Position, width: f64, depth: f64) -> Result<()> {
    if !(0.0..=width).contains(&p.x) || !(0.0..=depth).contains(&p.y) {
        return Err(Error::Config(format!(
            "position ({:.2}, {:.2}) lies outside the {width} m x {depth} m floor",
            p.x, p.y
        )));
    }
    Ok(())
}

/// Closest base by 3D distance; ties go to the lowest base id.
pub fn associate(dev: &Device, bases: &[Device]) -> Result<usize> {
    if bases.is_empty() {
        return Err(Error::Config(format!("no candidate base for device {}", dev.id)));
    }
    let network = dev.role.network();
    let mut best: Option<(f64, usize)> = None;
    for base in bases {
        if !base.role.is_base() || base.role.network() != network {
            return Err(Error::Config(format!(
                "device {} ({}) cannot attach to {} {}",
                dev.id,
                dev.role.as_str(),
                base.role.as_str(),
                base.id
            )));
        }
        let d = dev.position.distance_3d(&base.position);
        best = match best {
            Some((bd, bid)) if bd < d || (bd == d && bid < base.id) => Some((bd, bid)),
            _ => Some((d, base.id)),
        };
    }
    Ok(best.map(|(_, id)| id).expect("non-empty base list"))
}

/// Builds the topology: gNBs, then APs, then UEs, then STAs, ids ascending.
pub fn build_topology(config: &ScenarioConfig, seed: u64) -> Result<Topology> {
    if config.gnb_positions.is_empty() || config.ap_positions.is_empty() {
        return Err(Error::Config("both networks need at least one base".into()));
    }
    if !(config.floor_width_m > 0.0 && config.floor_depth_m > 0.0) {
        return Err(Error::Config("floor dimensions must be positive".into()));
    }
    let mut devices = Vec::new();
    for &(x, y) in &config.gnb_positions {
        let p = Position::new(x, y, BASE_HEIGHT_M);
        check_on_floor(&p, config.floor_width_m, config.floor_depth_m)?;
        devices.push(Device::base(devices.len(), Role::Gnb, p));
    }
    for &(x, y) in &config.ap_positions {
        let p = Position::new(x, y, BASE_HEIGHT_M);
        check_on_floor(&p, config.floor_width_m, config.floor_depth_m)?;
        devices.push(Device::base(devices.len(), Role::Ap, p));
    }
    let gnbs: Vec<Device> = devices.iter().filter(|d| d.role == Role::Gnb).cloned().collect();
    let aps: Vec<Device> = devices.iter().filter(|d| d.role == Role::Ap).cloned().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (role, bases) in [(Role::Ue, &gnbs), (Role::Sta, &aps)] {
        for _ in 0..bases.len() * config.devices_per_cell {
            let p = Position::new(
                rng.random::<f64>() * config.floor_width_m,
                rng.random::<f64>() * config.floor_depth_m,
                DEVICE_HEIGHT_M,
            );
            let mut dev = Device::terminal(devices.len(), role, p, usize::MAX);
            dev.associated_base = Some(associate(&dev, bases)?);
            devices.push(dev);
        }
    }

    Ok(Topology {
        devices,
        floor_width_m: config.floor_width_m,
        floor_depth_m: config.floor_depth_m,
        cells_per_network: config.gnb_positions.len(),
        devices_per_cell: config.devices_per_cell,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gnb(id: usize, x: f64) -> Device {
        Device::base(id, Role::Gnb, Position::new(x, 0.0, 3.0))
    }

    #[test]
    fn full_layout_counts() {
        let topo = build_topology(&ScenarioConfig::default(), 7).unwrap();
        assert_eq!(topo.len(), 36);
        assert_eq!(topo.ids_with_role(Role::Ue).count(), 15);
        assert_eq!(topo.ids_with_role(Role::Sta).count(), 15);
        for d in &topo.devices {
            match d.role {
                Role::Sta | Role::Ue => {
                    assert_eq!(d.tx_power_dbm, 18.0);
                    assert_eq!(d.position.z, 1.0);
                    let base = &topo.devices[d.associated_base.unwrap()];
                    assert_eq!(base.role.network(), d.role.network());
                    assert!(base.role.is_base());
                }
                Role::Ap | Role::Gnb => {
                    assert_eq!(d.tx_power_dbm, 23.0);
                    assert_eq!(d.position.z, 3.0);
                    assert!(d.associated_base.is_none());
                }
            }
        }
    }

    #[test]
    fn missing_network_is_rejected() {
        let config = ScenarioConfig {
            gnb_positions: vec![(20.0, 20.0)],
            ap_positions: vec![],
            ..ScenarioConfig::default()
        };
        assert!(matches!(build_topology(&config, 1), Err(Error::Config(_))));
    }

    #[test]
    fn base_off_floor_is_rejected() {
        let config = ScenarioConfig {
            gnb_positions: vec![(500.0, 20.0)],
            ..ScenarioConfig::default()
        };
        assert!(build_topology(&config, 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let c = ScenarioConfig::default();
        assert_eq!(build_topology(&c, 3).unwrap(), build_topology(&c, 3).unwrap());
        assert_ne!(build_topology(&c, 3).unwrap(), build_topology(&c, 4).unwrap());
    }

    #[test]
    fn associate_picks_closest() {
        let ue = Device::terminal(9, Role::Ue, Position::new(0.0, 0.0, 1.0), 0);
        assert_eq!(associate(&ue, &[gnb(0, 1.0), gnb(1, 5.0)]).unwrap(), 0);
    }

    #[test]
    fn associate_tie_goes_to_lowest_id() {
        let ue = Device::terminal(9, Role::Ue, Position::new(0.0, 0.0, 1.0), 0);
        assert_eq!(associate(&ue, &[gnb(7, -4.0), gnb(2, 4.0)]).unwrap(), 2);
    }

    #[test]
    fn associate_rejects_wrong_network_and_empty() {
        let sta = Device::terminal(9, Role::Sta, Position::new(0.0, 0.0, 1.0), 0);
        assert!(associate(&sta, &[gnb(0, 1.0)]).is_err());
        assert!(associate(&sta, &[]).is_err());
    }

    #[test]
    fn uniform_drop_is_centered() {
        let config = ScenarioConfig {
            devices_per_cell: 100_000,
            gnb_positions: vec![(20.0, 20.0)],
            ap_positions: vec![(20.0, 30.0)],
            ..ScenarioConfig::default()
        };
        let topo = build_topology(&config, 11).unwrap();
        let ues: Vec<&Device> = topo.devices.iter().filter(|d| d.role == Role::Ue).collect();
        let n = ues.len() as f64;
        let mx = ues.iter().map(|d| d.position.x).sum::<f64>() / n;
        let my = ues.iter().map(|d| d.position.y).sum::<f64>() / n;
        assert!((mx - 60.0).abs() / 60.0 < 0.01, "mean x {mx}");
        assert!((my - 25.0).abs() / 25.0 < 0.01, "mean y {my}");
    }

    proptest! {
        #[test]
        fn association_ignores_base_order(
            xs in prop::collection::vec(-50.0f64..50.0, 1..6),
            ux in -50.0f64..50.0,
            rot in 0usize..6,
        ) {
            let bases: Vec<Device> = xs.iter().enumerate().map(|(i, &x)| gnb(i, x)).collect();
            let ue = Device::terminal(99, Role::Ue, Position::new(ux, 3.0, 1.0), 0);
            let mut shuffled = bases.clone();
            shuffled.rotate_left(rot % bases.len());
            shuffled.reverse();
            prop_assert_eq!(associate(&ue, &bases).unwrap(), associate(&ue, &shuffled).unwrap());
        }
    }
}
