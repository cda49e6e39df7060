//! Long operations run off the request path with bounded parallelism. Job
//! records and results are files, so status survives a restart.

use std::sync::Arc;

use lithoquery::workspace::Workspace;
use lithoquery::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::status_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
    pub http_status: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: String,
    pub project_id: String,
    pub status: JobStatus,
    pub progress: f64,
    /// Path of the result document once done.
    pub result_ref: Option<String>,
    pub error: Option<JobError>,
}

const JOBS: &str = "jobs";
const RESULTS: &str = "results";

pub struct JobRunner {
    ws: Arc<Workspace>,
    permits: Arc<Semaphore>,
}

type Work = Box<dyn FnOnce(&Workspace) -> Result<serde_json::Value> + Send>;

impl JobRunner {
    /// Jobs left queued or running by a previous process are marked failed.
    pub fn new(ws: Arc<Workspace>, max_jobs: usize) -> Result<Self> {
        let store = ws.store();
        for id in store.artifact_ids(JOBS)? {
            let mut rec: JobRecord = store.artifact(JOBS, &id)?;
            if matches!(rec.status, JobStatus::Queued | JobStatus::Running) {
                rec.status = JobStatus::Failed;
                rec.error = Some(JobError {
                    code: "interrupted".into(),
                    message: "the service restarted before the job finished".into(),
                    http_status: 500,
                });
                store.save_artifact(JOBS, &id, &rec)?;
            }
        }
        Ok(JobRunner {
            ws,
            permits: Arc::new(Semaphore::new(max_jobs.max(1))),
        })
    }

    pub fn get(&self, job_id: &str) -> Result<JobRecord> {
        self.ws.store().artifact(JOBS, job_id)
    }

    pub fn result(&self, job_id: &str) -> Result<serde_json::Value> {
        self.ws.store().artifact(RESULTS, job_id)
    }

    /// Record a queued job and start it. Must be called inside the runtime.
    pub fn submit(&self, kind: &str, project_id: &str, work: Work) -> Result<JobRecord> {
        let rec = JobRecord {
            job_id: format!("job-{:016x}", rand::rng().random::<u64>()),
            kind: kind.to_string(),
            project_id: project_id.to_string(),
            status: JobStatus::Queued,
            progress: 0.0,
            result_ref: None,
            error: None,
        };
        self.ws.store().save_artifact(JOBS, &rec.job_id, &rec)?;

        let ws = self.ws.clone();
        let permits = self.permits.clone();
        let mut running = rec.clone();
        tokio::spawn(async move {
            let _permit = permits.acquire_owned().await;
            running.status = JobStatus::Running;
            let save = |ws: &Workspace, r: &JobRecord| {
                if let Err(e) = ws.store().save_artifact(JOBS, &r.job_id, r) {
                    tracing::error!(job = %r.job_id, "cannot record job state: {e}");
                }
            };
            save(&ws, &running);
            let worker_ws = ws.clone();
            let job_id = running.job_id.clone();
            let outcome = tokio::task::spawn_blocking(move || {
                let value = work(&worker_ws)?;
                worker_ws.store().save_artifact(RESULTS, &job_id, &value)?;
                Ok::<_, Error>(())
            })
            .await;
            match outcome {
                Ok(Ok(())) => {
                    running.status = JobStatus::Done;
                    running.progress = 1.0;
                    running.result_ref = Some(format!("/results/{}", running.job_id));
                }
                Ok(Err(e)) => {
                    running.status = JobStatus::Failed;
                    running.error = Some(JobError {
                        code: e.code().to_string(),
                        message: e.to_string(),
                        http_status: status_of(e.class()).as_u16(),
                    });
                }
                Err(join) => {
                    running.status = JobStatus::Failed;
                    running.error = Some(JobError {
                        code: "internal".into(),
                        message: format!("job panicked: {join}"),
                        http_status: 500,
                    });
                }
            }
            save(&ws, &running);
        });
        Ok(rec)
    }
}
