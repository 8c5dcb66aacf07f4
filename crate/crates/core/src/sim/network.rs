//! Bandwidth, transfer-time and message-latency models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{LinkModel, NodeId, SimTime, Topology};

const MAX_REJECTIONS: usize = 64;

/// One bandwidth draw in Mbps: Normal(mean, stddev) truncated below at the
/// link floor.
pub fn sample_bandwidth<R: Rng + ?Sized>(link: &LinkModel, rng: &mut R) -> f64 {
    if link.stddev_mbps <= 0.0 {
        return link.mean_mbps;
    }
    let normal = Normal::new(link.mean_mbps, link.stddev_mbps).expect("validated link model");
    for _ in 0..MAX_REJECTIONS {
        let x = normal.sample(rng);
        if x >= link.floor_mbps {
            return x;
        }
    }
    link.floor_mbps
}

/// Time to move `bytes` over `link`, redrawing the bandwidth every
/// `resample` of transfer. `None` means node-local (free).
pub fn transfer_time<R: Rng + ?Sized>(bytes: u64, link: Option<&LinkModel>, resample: SimTime, rng: &mut R) -> SimTime {
    let Some(link) = link else {
        return SimTime::ZERO;
    };
    if bytes == 0 {
        return SimTime::ZERO;
    }
    let step = resample.as_secs_f64().max(1e-3);
    let mut bits = bytes as f64 * 8.0;
    let mut secs = 0.0;
    loop {
        let bps = sample_bandwidth(link, rng) * 1e6;
        let need = bits / bps;
        if need <= step {
            secs += need;
            break;
        }
        bits -= bps * step;
        secs += step;
    }
    SimTime::from_millis((secs * 1000.0 - 1e-9).ceil().max(0.0) as u64)
}

/// Transfer between two nodes over whichever link connects them.
pub fn transfer_between<R: Rng + ?Sized>(
    topology: &Topology,
    src: NodeId,
    dst: NodeId,
    bytes: u64,
    resample: SimTime,
    rng: &mut R,
) -> SimTime {
    transfer_time(bytes, topology.link(src, dst).as_ref(), resample, rng)
}

/// One-way message delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub mean_ms: f64,
    #[serde(default)]
    pub stddev_ms: f64,
}

impl LatencyModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        let x = if self.stddev_ms > 0.0 {
            Normal::new(self.mean_ms, self.stddev_ms).expect("valid latency").sample(rng)
        } else {
            self.mean_ms
        };
        SimTime::from_millis(x.round().max(1.0) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_link_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = LinkModel::constant(100.0);
        for _ in 0..10 {
            assert_eq!(sample_bandwidth(&l, &mut rng), 100.0);
        }
    }

    #[test]
    fn zero_bytes_and_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(transfer_time(0, Some(&LinkModel::WAN), SimTime::from_secs(5), &mut rng), SimTime::ZERO);
        assert_eq!(transfer_time(1 << 30, None, SimTime::from_secs(5), &mut rng), SimTime::ZERO);
    }

    #[test]
    fn hundred_megabit_at_hundred_mbps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = transfer_time(12_500_000, Some(&LinkModel::constant(100.0)), SimTime::from_secs(5), &mut rng);
        assert_eq!(t, SimTime::from_secs(1));
        // long transfer spanning several resample intervals
        let t = transfer_time(125_000_000, Some(&LinkModel::constant(100.0)), SimTime::from_secs(5), &mut rng);
        assert_eq!(t, SimTime::from_secs(10));
    }

    #[test]
    fn samples_respect_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = LinkModel { mean_mbps: 100.0, stddev_mbps: 30.0, floor_mbps: 80.0 };
        for _ in 0..2000 {
            assert!(sample_bandwidth(&l, &mut rng) >= 80.0);
        }
    }

    #[test]
    fn latency_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = LatencyModel { mean_ms: 2.0, stddev_ms: 50.0 };
        for _ in 0..100 {
            assert!(m.sample(&mut rng) >= SimTime(1));
        }
    }
}
