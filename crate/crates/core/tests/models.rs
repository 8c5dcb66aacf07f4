use houtu::model::{LinkModel, SchedulerParams, SimTime, Topology};
use houtu::sim::config::FailureSpec;
use houtu::sim::failure::inject_failures;
use houtu::sim::network::{sample_bandwidth, transfer_time};
use houtu::sim::workload::{generate_workload, GeneratedWorkload};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn size_mix_and_arrival_gaps() {
    let cfg = GeneratedWorkload { count: 10_000, ..Default::default() };
    let mut sizes = ChaCha8Rng::seed_from_u64(11);
    let mut arrivals = ChaCha8Rng::seed_from_u64(12);
    let jobs = generate_workload(&cfg, 4, &SchedulerParams::default(), &mut sizes, &mut arrivals);
    let share = |tag: &str| jobs.iter().filter(|j| j.name.contains(tag)).count() as f64 / jobs.len() as f64;
    for (tag, want) in [("-small-", 0.46), ("-medium-", 0.40), ("-large-", 0.14)] {
        let got = share(tag);
        assert!((got - want).abs() <= 0.02, "{tag}: {got}");
    }
    let gap = (jobs.last().unwrap().release_s - jobs[0].release_s) / (jobs.len() - 1) as f64;
    assert!((58.0..=62.0).contains(&gap), "mean gap {gap}");
}

#[test]
fn spot_terminations_follow_the_exponential_count() {
    // every node draws one lifetime, so the expected count is n(1 - e^{-λH})
    let topo = Topology::uniform(4, 2, 2, 1);
    let n = topo.nodes.len() as f64;
    let (rate, horizon) = (0.5, 3600.0);
    let spec = FailureSpec { spot_rate_per_hour: rate, ..Default::default() };
    let seeds = 2000;
    let mut total = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        total += inject_failures(&spec, &topo, SimTime::from_secs_f64(horizon), &mut rng).len();
    }
    let got = total as f64 / seeds as f64;
    let want = n * (1.0 - (-rate * horizon / 3600.0f64).exp());
    assert!((got / want - 1.0).abs() < 0.10, "{got} vs {want}");
}

#[test]
fn wan_bandwidth_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..10_000).map(|_| sample_bandwidth(&LinkModel::WAN, &mut rng)).collect();
    assert!(xs.iter().all(|x| *x >= LinkModel::WAN.floor_mbps));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    assert!((sd / 100.0 - 0.30).abs() < 0.02, "stddev {sd}");
}

/// The resampling model written out independently: bandwidth redrawn every
/// five seconds until a gigabyte has gone through.
fn gigabyte_seconds(rng: &mut ChaCha8Rng) -> f64 {
    let normal = Normal::new(100.0, 30.0).unwrap();
    let mut left = 8e9;
    let mut t = 0.0;
    loop {
        let mut mbps: f64 = normal.sample(rng);
        let mut tries = 0;
        while mbps < 10.0 && tries < 63 {
            mbps = normal.sample(rng);
            tries += 1;
        }
        let bps = mbps.max(10.0) * 1e6;
        if left / bps <= 5.0 {
            return t + left / bps;
        }
        left -= bps * 5.0;
        t += 5.0;
    }
}

#[test]
fn gigabyte_over_wan_matches_monte_carlo() {
    let runs = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sim: Vec<f64> =
        (0..runs).map(|_| transfer_time(1_000_000_000, Some(&LinkModel::WAN), SimTime::from_secs(5), &mut rng).as_secs_f64()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let oracle: Vec<f64> = (0..runs).map(|_| gigabyte_seconds(&mut rng)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64]| (v.iter().map(|x| (x - mean(v)).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    assert!((mean(&sim) / mean(&oracle) - 1.0).abs() < 0.02, "{} vs {}", mean(&sim), mean(&oracle));
    assert!((sd(&sim) / sd(&oracle) - 1.0).abs() < 0.10, "{} vs {}", sd(&sim), sd(&oracle));
    assert!((78.0..=86.0).contains(&mean(&sim)), "{}", mean(&sim));
}

#[test]
fn lan_is_about_eight_times_wan() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let runs = 2000;
    let avg = |link: &LinkModel, rng: &mut ChaCha8Rng| {
        (0..runs).map(|_| transfer_time(200_000_000, Some(link), SimTime::from_secs(5), rng).as_secs_f64()).sum::<f64>() / runs as f64
    };
    let ratio = avg(&LinkModel::WAN, &mut rng) / avg(&LinkModel::LAN, &mut rng);
    assert!((7.0..=9.5).contains(&ratio), "{ratio}");
}
