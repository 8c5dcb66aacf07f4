//! Synthetic workload: four DAG families (word count, multi-way join,
//! iterative learning, PageRank) in three input-size classes, released by a
//! Poisson process.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::model::{InputPlacement, JobSpec, SchedulerParams, Share, StageInputSpec, StageSpec};

const MB: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    WordCount,
    MultiJoin,
    Iterative,
    PageRank,
}

impl Template {
    pub const ALL: [Template; 4] = [Template::WordCount, Template::MultiJoin, Template::Iterative, Template::PageRank];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratedWorkload {
    pub count: u32,
    /// Mean gap between releases; 0 releases every job at `start_s`.
    pub mean_interarrival_s: f64,
    pub start_s: f64,
    /// Probabilities of small, medium and large inputs.
    pub mix: [f64; 3],
    pub templates: Vec<Template>,
    /// Cap on tasks per job.
    pub max_tasks: u32,
    /// Task processing time range, seconds.
    pub p_range_s: (f64, f64),
    /// Input bytes per root task, MB.
    pub input_mb_range: (u64, u64),
    /// Intermediate output per task, MB.
    pub output_mb_range: (u64, u64),
}

impl Default for GeneratedWorkload {
    fn default() -> Self {
        GeneratedWorkload {
            count: 20,
            mean_interarrival_s: 60.0,
            start_s: 0.0,
            mix: [0.46, 0.40, 0.14],
            templates: Template::ALL.to_vec(),
            max_tasks: 64,
            p_range_s: (30.0, 90.0),
            input_mb_range: (16, 64),
            output_mb_range: (4, 32),
        }
    }
}

/// Explicit jobs plus an optional generated stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub jobs: Vec<JobSpec>,
    pub generated: Option<GeneratedWorkload>,
}

pub fn draw_size<R: Rng + ?Sized>(mix: &[f64; 3], rng: &mut R) -> SizeClass {
    let total: f64 = mix.iter().sum();
    let x = rng.random::<f64>() * total;
    if x < mix[0] {
        SizeClass::Small
    } else if x < mix[0] + mix[1] {
        SizeClass::Medium
    } else {
        SizeClass::Large
    }
}

/// Release times: the first at `start`, then exponential gaps.
pub fn arrival_times<R: Rng + ?Sized>(count: u32, mean_gap_s: f64, start_s: f64, rng: &mut R) -> Vec<f64> {
    let mut t = start_s;
    let exp = (mean_gap_s > 0.0).then(|| Exp::new(1.0 / mean_gap_s).expect("positive rate"));
    (0..count)
        .map(|i| {
            if i > 0 {
                if let Some(e) = &exp {
                    t += e.sample(rng);
                }
            }
            t
        })
        .collect()
}

struct Shape {
    template: Template,
    width: u32,
    dcs: u16,
}

impl Shape {
    fn iterations(&self, size: SizeClass) -> u32 {
        match size {
            SizeClass::Small => 2,
            SizeClass::Medium => 3,
            SizeClass::Large => 4,
        }
    }

    /// (width, predecessors, root placement) per stage.
    fn stages(&self, size: SizeClass) -> Vec<(u32, Vec<u32>, Option<InputPlacement>)> {
        let w = self.width;
        let half = (w / 2).max(1);
        match self.template {
            Template::WordCount => vec![(w, vec![], Some(InputPlacement::Even)), (half, vec![0], None)],
            Template::MultiJoin => {
                // two tables per data center, joined pairwise, then aggregated
                let tables = 2 * self.dcs as u32;
                let scan_w = (w / tables).max(1);
                let mut out: Vec<(u32, Vec<u32>, Option<InputPlacement>)> =
                    (0..tables).map(|t| (scan_w, vec![], Some(InputPlacement::Dc((t / 2) as u16)))).collect();
                let mut layer: Vec<u32> = (0..tables).collect();
                while layer.len() > 1 {
                    let mut next = Vec::new();
                    for pair in layer.chunks(2) {
                        let id = out.len() as u32;
                        out.push((half, pair.to_vec(), None));
                        next.push(id);
                    }
                    layer = next;
                }
                let last = out.len() as u32 - 1;
                out.push((1, vec![last], None));
                out
            }
            Template::Iterative => {
                let mut out = vec![(w, vec![], Some(InputPlacement::Even))];
                for i in 0..self.iterations(size) {
                    out.push((w, vec![i], None));
                }
                let last = out.len() as u32 - 1;
                out.push((1, vec![last], None));
                out
            }
            Template::PageRank => {
                let mut out = vec![(w, vec![], Some(InputPlacement::Even))];
                for _ in 0..self.iterations(size) {
                    let prev = out.len() as u32 - 1;
                    out.push((w, vec![prev], None));
                    out.push((half, vec![prev + 1], None));
                }
                let last = out.len() as u32 - 1;
                out.push((1, vec![last], None));
                out
            }
        }
    }
}

fn width_range(size: SizeClass) -> (u32, u32) {
    match size {
        SizeClass::Small => (2, 4),
        SizeClass::Medium => (4, 8),
        SizeClass::Large => (8, 16),
    }
}

/// Draws a share in `[θ, 1−δ]` on a 0.05 grid.
fn draw_share<R: Rng + ?Sized>(params: &SchedulerParams, rng: &mut R) -> f64 {
    let lo = params.min_task_share().0.div_ceil(50);
    let hi = params.max_task_share().0 / 50;
    if hi < lo {
        return params.min_task_share().as_fraction();
    }
    Share(rng.random_range(lo..=hi) * 50).as_fraction()
}

/// One job of the given family and size.
pub fn build_job<R: Rng + ?Sized>(
    name: String,
    template: Template,
    size: SizeClass,
    dcs: u16,
    cfg: &GeneratedWorkload,
    params: &SchedulerParams,
    rng: &mut R,
) -> JobSpec {
    let (lo, hi) = width_range(size);
    let mut width = rng.random_range(lo..=hi);
    let mut shape = Shape { template, width, dcs };
    while width > 1 && shape.stages(size).iter().map(|s| s.0).sum::<u32>() > cfg.max_tasks {
        width -= 1;
        shape.width = width;
    }
    let stages = shape
        .stages(size)
        .into_iter()
        .map(|(count, predecessors, placement)| {
            let (plo, phi) = cfg.p_range_s;
            let p = if phi > plo { rng.random_range(plo..phi) } else { plo };
            let p_s = (p * 10.0).round() / 10.0;
            let r = draw_share(params, rng);
            let (olo, ohi) = cfg.output_mb_range;
            let output_bytes = rng.random_range(olo..=ohi.max(olo)) * MB;
            let input = placement.map(|placement| {
                let (ilo, ihi) = cfg.input_mb_range;
                StageInputSpec { bytes_per_task: rng.random_range(ilo..=ihi.max(ilo)) * MB, placement }
            });
            StageSpec { count, r, p_s, predecessors, output_bytes, input }
        })
        .collect();
    JobSpec { name, release_s: 0.0, stages }
}

/// Draws the generated part of a workload. Sizes and families come from
/// `sizes`, release times from `arrivals`, so either can change without
/// perturbing the other.
pub fn generate_workload<R: Rng + ?Sized>(
    cfg: &GeneratedWorkload,
    dcs: u16,
    params: &SchedulerParams,
    sizes: &mut R,
    arrivals: &mut R,
) -> Vec<JobSpec> {
    let times = arrival_times(cfg.count, cfg.mean_interarrival_s, cfg.start_s, arrivals);
    let templates = if cfg.templates.is_empty() { Template::ALL.to_vec() } else { cfg.templates.clone() };
    times
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let size = draw_size(&cfg.mix, sizes);
            let template = templates[sizes.random_range(0..templates.len())];
            let name = format!("{}-{}-{i}", template_name(template), size_name(size));
            let mut job = build_job(name, template, size, dcs, cfg, params, sizes);
            job.release_s = (t * 1000.0).round() / 1000.0;
            job
        })
        .collect()
}

fn template_name(t: Template) -> &'static str {
    match t {
        Template::WordCount => "wordcount",
        Template::MultiJoin => "join",
        Template::Iterative => "iterative",
        Template::PageRank => "pagerank",
    }
}

fn size_name(s: SizeClass) -> &'static str {
    match s {
        SizeClass::Small => "small",
        SizeClass::Medium => "medium",
        SizeClass::Large => "large",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JobId, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_family_instantiates_and_is_admissible() {
        let topo = Topology::uniform(4, 2, 2, 1);
        let params = SchedulerParams::default();
        let cfg = GeneratedWorkload::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in Template::ALL {
            for s in [SizeClass::Small, SizeClass::Medium, SizeClass::Large] {
                let spec = build_job("x".into(), t, s, 4, &cfg, &params, &mut rng);
                let job = spec.instantiate(JobId(0), &topo).unwrap();
                job.admit(&params, Share::FULL).unwrap();
                assert!(job.task_count() as u32 <= cfg.max_tasks.max(2 * 4 + 8), "{t:?} {s:?} {}", job.task_count());
            }
        }
    }

    #[test]
    fn join_puts_two_tables_per_dc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = build_job("j".into(), Template::MultiJoin, SizeClass::Medium, 4, &GeneratedWorkload::default(), &SchedulerParams::default(), &mut rng);
        let roots: Vec<_> = spec.stages.iter().filter_map(|s| s.input.as_ref()).map(|i| i.placement.clone()).collect();
        assert_eq!(roots.len(), 8);
        for d in 0..4u16 {
            assert_eq!(roots.iter().filter(|p| **p == InputPlacement::Dc(d)).count(), 2);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = GeneratedWorkload { count: 30, ..Default::default() };
        let p = SchedulerParams::default();
        let gen = |seed| {
            let mut a = ChaCha8Rng::seed_from_u64(seed);
            let mut b = ChaCha8Rng::seed_from_u64(seed + 1);
            generate_workload(&cfg, 4, &p, &mut a, &mut b)
        };
        assert_eq!(gen(7), gen(7));
        assert_ne!(gen(7), gen(8));
    }

    #[test]
    fn batch_release() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(arrival_times(5, 0.0, 3.0, &mut rng).iter().all(|t| *t == 3.0));
    }
}
