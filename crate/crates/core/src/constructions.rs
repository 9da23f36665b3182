//! Small hand-built geometries with explicit link gains, used to check the
//! simulator against closed-form expectations and the classic hidden and
//! exposed terminal situations.
//!
//! Device ids are fixed: 0 = gNB, 1 = AP, 2 = UE, 3 = STA. Gains are
//! symmetric and given in dB; links that are not listed are effectively
//! disconnected (-200 dB).

use crate::channel::{FadingMode, LinkGainTable};
use crate::scenario::{Device, Position, Role, Topology};
use crate::units::db_to_linear;
use crate::Result;

pub const GNB: usize = 0;
pub const AP: usize = 1;
pub const UE: usize = 2;
pub const STA: usize = 3;

const DISCONNECTED_DB: f64 = -200.0;

/// One cell per network with a single terminal each.
pub fn two_cell_topology() -> Result<Topology> {
    let devices = vec![
        Device::base(GNB, Role::Gnb, Position::new(10.0, 10.0, 3.0)),
        Device::base(AP, Role::Ap, Position::new(30.0, 10.0, 3.0)),
        Device::terminal(UE, Role::Ue, Position::new(12.0, 12.0, 1.0), GNB),
        Device::terminal(STA, Role::Sta, Position::new(28.0, 12.0, 1.0), AP),
    ];
    Topology::from_devices(devices, 40.0, 20.0)
}

/// Gain table from `(a, b, gain_db)` triples; fading pinned to one.
pub fn gain_table(n: usize, links: &[(usize, usize, f64)]) -> Result<LinkGainTable> {
    let mut mean = vec![db_to_linear(DISCONNECTED_DB); n * n];
    for &(a, b, g) in links {
        mean[a * n + b] = db_to_linear(g);
        mean[b * n + a] = db_to_linear(g);
    }
    LinkGainTable::from_mean_gains(n, mean, FadingMode::Pinned)
}

/// Each terminal 68 dB from its own base and isolated from the other cell:
/// the two networks never interact.
pub fn isolated() -> Result<(Topology, LinkGainTable)> {
    Ok((two_cell_topology()?, gain_table(4, &[(UE, GNB, -68.0), (STA, AP, -68.0)])?))
}

/// The UE and the STA hear each other at -65 dBm: detected by an ED
/// threshold of -82 dBm but not -52 dBm, and invisible to WiFi preamble
/// detection. Each terminal lands 3-5 dB above its own signal at the other
/// cell's receiver, and the gNB hears the STA at -53 dBm, just under
/// -52 dBm. With the permissive threshold both cells transmit on top of
/// each other and every data frame fails; with the conservative one they
/// take turns.
pub fn hidden_node() -> Result<(Topology, LinkGainTable)> {
    let links = [
        (UE, GNB, -68.0),
        (STA, AP, -68.0),
        (UE, STA, -83.0),
        (STA, GNB, -71.0),
        (UE, AP, -63.0),
    ];
    Ok((two_cell_topology()?, gain_table(4, &links)?))
}

/// The UE and the STA again hear each other at -65 dBm, but each is far
/// from the other cell's receiver (received interference below -80 dBm), so
/// simultaneous transmissions would both decode. A conservative threshold
/// makes them defer needlessly.
pub fn exposed_node() -> Result<(Topology, LinkGainTable)> {
    let links = [
        (UE, GNB, -68.0),
        (STA, AP, -68.0),
        (UE, STA, -83.0),
        (STA, GNB, -101.0),
        (UE, AP, -110.0),
    ];
    Ok((two_cell_topology()?, gain_table(4, &links)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_tables_are_symmetric_and_pinned() {
        let (topo, gains) = hidden_node().unwrap();
        assert_eq!(topo.len(), 4);
        assert_eq!(gains.fading(), FadingMode::Pinned);
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert_eq!(gains.gain(a, b), gains.gain(b, a));
                }
            }
        }
        assert!((gains.gain(UE, STA) - 10f64.powf(-8.3)).abs() < 1e-20);
    }
}
