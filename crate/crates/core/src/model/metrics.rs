//! Work, makespan and response-time definitions over completed jobs.

use super::job::DagJob;
use super::time::SimTime;
use crate::error::{Error, Result};

/// `T1(J) = Σ r·p`, in container-seconds.
pub fn job_work(job: &DagJob) -> f64 {
    job.tasks().map(|t| t.r.as_fraction() * t.p.as_secs_f64()).sum()
}

/// Completion time of the last job, measured from time zero.
pub fn makespan(jobs: &[DagJob]) -> Result<SimTime> {
    let mut last = SimTime::ZERO;
    for j in jobs {
        let done = j.completion.ok_or(Error::Incomplete(j.id))?;
        last = last.max(done);
    }
    Ok(last)
}

/// Mean of `T(J_i) − r(J_i)` in seconds.
pub fn avg_response_time(jobs: &[DagJob]) -> Result<f64> {
    if jobs.is_empty() {
        return Err(Error::EmptyJobSet);
    }
    let mut sum = 0.0;
    for j in jobs {
        let done = j.completion.ok_or(Error::Incomplete(j.id))?;
        sum += done.saturating_sub(j.release).as_secs_f64();
    }
    Ok(sum / jobs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::job::{JobId, JobSpec, StageInputSpec, StageSpec, InputPlacement};
    use crate::model::topology::Topology;

    fn job_with(stages: &[(u32, f64, f64)]) -> DagJob {
        let topo = Topology::uniform(1, 1, 1, 1);
        let spec = JobSpec {
            name: "w".into(),
            release_s: 0.0,
            stages: stages
                .iter()
                .enumerate()
                .map(|(i, &(count, r, p))| StageSpec {
                    count,
                    r,
                    p_s: p,
                    predecessors: if i == 0 { vec![] } else { vec![i as u32 - 1] },
                    output_bytes: 0,
                    input: (i == 0).then_some(StageInputSpec { bytes_per_task: 0, placement: InputPlacement::Even }),
                })
                .collect(),
        };
        spec.instantiate(JobId(0), &topo).unwrap()
    }

    fn completed(release: u64, done: u64) -> DagJob {
        let mut j = job_with(&[(1, 0.5, 1.0)]);
        j.release = SimTime::from_secs(release);
        j.completion = Some(SimTime::from_secs(done));
        j
    }

    #[test]
    fn work_single_task() {
        assert_eq!(job_work(&job_with(&[(1, 0.5, 10.0)])), 5.0);
    }

    #[test]
    fn work_empty_job() {
        let mut j = job_with(&[(1, 0.5, 10.0)]);
        j.stages.clear();
        assert_eq!(job_work(&j), 0.0);
    }

    #[test]
    fn work_fig6_shape() {
        // 3×(0.5·4) + 2×(0.5·6) + 1×(1.0·2) = 6 + 6 + 2
        let j = job_with(&[(3, 0.5, 4.0), (2, 0.5, 6.0), (1, 1.0, 2.0)]);
        assert!((job_work(&j) - 14.0).abs() < 1e-12);
    }

    #[test]
    fn makespan_is_max_completion() {
        let jobs = vec![completed(0, 10), completed(0, 20), completed(0, 15)];
        assert_eq!(makespan(&jobs).unwrap(), SimTime::from_secs(20));
        assert_eq!(makespan(&[completed(0, 7)]).unwrap(), SimTime::from_secs(7));
    }

    #[test]
    fn makespan_rejects_incomplete() {
        let mut j = completed(0, 1);
        j.completion = None;
        assert!(matches!(makespan(&[j]), Err(Error::Incomplete(_))));
    }

    #[test]
    fn serial_schedule_example() {
        // Two 50 s jobs released at 0 and 100 on one container finish at 150
        // and 200; the second waits for nothing, so 200 not 150.
        let jobs = vec![completed(0, 150), completed(100, 200)];
        assert_eq!(makespan(&jobs).unwrap(), SimTime::from_secs(200));
        assert_eq!(avg_response_time(&jobs).unwrap(), 125.0);
    }

    #[test]
    fn response_means() {
        assert_eq!(avg_response_time(&[completed(5, 25)]).unwrap(), 20.0);
        assert_eq!(avg_response_time(&[completed(0, 10), completed(0, 30)]).unwrap(), 20.0);
        assert!(matches!(avg_response_time(&[]), Err(Error::EmptyJobSet)));
    }
}
