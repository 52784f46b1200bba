//! Optimization jobs on a bounded pool of worker threads.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use convis::regopt::run_optimization_with;
use convis::{Network, RegParams, UnitRef};
use crossbeam_channel::{unbounded, Sender};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::events::{Event, Events};
use crate::store::{ResultKey, ResultMeta, ResultsStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Forward-only: queued -> running -> done | failed.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done | JobState::Failed)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub step: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptJob {
    pub id: String,
    pub unit: UnitRef,
    /// Parameters of the first seed; later seeds differ only in `seed`.
    pub params: RegParams,
    pub seeds: Vec<u64>,
    pub state: JobState,
    pub progress: Progress,
    /// One entry per seed, filled when the job is done.
    pub results: Vec<ResultMeta>,
    /// Seeds served from the results store without recomputing.
    pub cached: usize,
    pub error: Option<String>,
}

impl OptJob {
    fn advance(&mut self, next: JobState) {
        assert!(
            self.state.can_become(next),
            "job {} cannot go {:?} -> {:?}",
            self.id,
            self.state,
            next
        );
        self.state = next;
    }
}

type JobTable = RwLock<HashMap<String, Arc<Mutex<OptJob>>>>;

/// Workers pull job ids from an unbounded queue, so a saturated pool only
/// delays jobs, never drops them.
pub struct JobPool {
    jobs: Arc<JobTable>,
    queue: Option<Sender<String>>,
    workers: Vec<JoinHandle<()>>,
    next: AtomicU64,
}

struct Worker {
    net: Arc<Network>,
    net_hash: String,
    store: ResultsStore,
    jobs: Arc<JobTable>,
    events: Events,
}

impl JobPool {
    pub fn new(workers: usize, net: Arc<Network>, net_hash: String, store: ResultsStore, events: Events) -> Self {
        let jobs: Arc<JobTable> = Arc::default();
        let (tx, rx) = unbounded::<String>();
        let workers = (0..workers.max(1))
            .map(|i| {
                let rx = rx.clone();
                let w = Worker {
                    net: Arc::clone(&net),
                    net_hash: net_hash.clone(),
                    store: store.clone(),
                    jobs: Arc::clone(&jobs),
                    events: events.clone(),
                };
                std::thread::Builder::new()
                    .name(format!("opt-worker-{i}"))
                    .spawn(move || {
                        for id in rx {
                            w.run(&id);
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        JobPool {
            jobs,
            queue: Some(tx),
            workers,
            next: AtomicU64::new(0),
        }
    }

    pub fn submit(&self, unit: UnitRef, params: RegParams, seeds: Vec<u64>) -> Result<String> {
        if seeds.is_empty() {
            return Err(ServiceError::BadRequest("a job needs at least one seed".into()));
        }
        params.validate()?;
        let id = format!("j{}", self.next.fetch_add(1, Ordering::Relaxed) + 1);
        let total = params.steps * seeds.len();
        let job = OptJob {
            id: id.clone(),
            unit,
            params,
            seeds,
            state: JobState::Queued,
            progress: Progress { step: 0, total },
            results: Vec::new(),
            cached: 0,
            error: None,
        };
        self.jobs
            .write()
            .expect("jobs lock")
            .insert(id.clone(), Arc::new(Mutex::new(job)));
        self.queue
            .as_ref()
            .expect("pool running")
            .send(id.clone())
            .expect("workers alive");
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<OptJob> {
        let jobs = self.jobs.read().expect("jobs lock");
        let job = jobs
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("job `{id}`")))?;
        let snapshot = job.lock().expect("job lock").clone();
        Ok(snapshot)
    }
}

impl Drop for JobPool {
    fn drop(&mut self) {
        self.queue.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Worker {
    fn job(&self, id: &str) -> Arc<Mutex<OptJob>> {
        Arc::clone(&self.jobs.read().expect("jobs lock")[id])
    }

    fn publish(&self, job: &OptJob) {
        self.events.send(Event::Job {
            id: job.id.clone(),
            state: job.state,
            step: job.progress.step,
            total: job.progress.total,
        });
    }

    fn run(&self, id: &str) {
        let handle = self.job(id);
        let (unit, params, seeds) = {
            let mut job = handle.lock().expect("job lock");
            job.advance(JobState::Running);
            self.publish(&job);
            (job.unit.clone(), job.params.clone(), job.seeds.clone())
        };
        let outcome = self.run_seeds(&handle, &unit, &params, &seeds);
        let mut job = handle.lock().expect("job lock");
        match outcome {
            Ok((results, cached)) => {
                job.results = results;
                job.cached = cached;
                job.progress.step = job.progress.total;
                job.advance(JobState::Done);
            }
            Err(e) => {
                job.error = Some(e.to_string());
                job.advance(JobState::Failed);
            }
        }
        self.publish(&job);
    }

    fn run_seeds(
        &self,
        handle: &Mutex<OptJob>,
        unit: &UnitRef,
        params: &RegParams,
        seeds: &[u64],
    ) -> Result<(Vec<ResultMeta>, usize)> {
        let mut results = Vec::with_capacity(seeds.len());
        let mut cached = 0;
        for (i, &seed) in seeds.iter().enumerate() {
            let p = RegParams { seed, ..params.clone() };
            let key = ResultKey::new(&self.net_hash, unit, &p);
            let done_before = i * p.steps;
            if self.store.contains(&key) {
                results.push(self.store.meta(&key)?);
                cached += 1;
                continue;
            }
            let report_every = (p.steps / 20).max(1);
            let r = run_optimization_with(&self.net, unit, &p, |step, _| {
                let mut job = handle.lock().expect("job lock");
                job.progress.step = done_before + step + 1;
                if (step + 1) % report_every == 0 {
                    self.publish(&job);
                }
            })?;
            results.push(self.store.save(&key, &r, self.net.mean())?);
        }
        Ok((results, cached))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_only_forward() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_become(b))
            .collect();
        assert_eq!(allowed, vec![(Queued, Running), (Running, Done), (Running, Failed)]);
    }
}
