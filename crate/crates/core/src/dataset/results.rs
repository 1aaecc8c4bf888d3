//! Per-frame pose estimation results as JSON.
//!
//! ```json
//! [{"frame_id": 0, "R": [9 floats, row-major], "t": [3 floats, mm],
//!   "score": 0.93, "status": "ok", ...},
//!  {"frame_id": 1, "R": null, "t": null, "score": null, "status": "failed",
//!   "error": "..."}]
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Estimated {
        pose: RigidTransform,
        score: f64,
        n_icp_iters: usize,
        inlier_fraction: f64,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_id: u32,
    pub outcome: FrameOutcome,
}

impl FrameResult {
    pub fn pose(&self) -> Option<&RigidTransform> {
        match &self.outcome {
            FrameOutcome::Estimated { pose, .. } => Some(pose),
            FrameOutcome::Failed { .. } => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.outcome, FrameOutcome::Failed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Status {
    Ok,
    Failed,
}

#[derive(Serialize, Deserialize)]
struct Record {
    frame_id: u32,
    #[serde(rename = "R")]
    r: Option<[f64; 9]>,
    t: Option<[f64; 3]>,
    score: Option<f64>,
    status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_icp_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inlier_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl From<&FrameResult> for Record {
    fn from(f: &FrameResult) -> Self {
        match &f.outcome {
            FrameOutcome::Estimated {
                pose,
                score,
                n_icp_iters,
                inlier_fraction,
            } => {
                let t = pose.translation();
                Record {
                    frame_id: f.frame_id,
                    r: Some(pose.rotation_row_major()),
                    t: Some([t.x, t.y, t.z]),
                    score: Some(*score),
                    status: Status::Ok,
                    n_icp_iters: Some(*n_icp_iters),
                    inlier_fraction: Some(*inlier_fraction),
                    error: None,
                }
            }
            FrameOutcome::Failed { reason } => Record {
                frame_id: f.frame_id,
                r: None,
                t: None,
                score: None,
                status: Status::Failed,
                n_icp_iters: None,
                inlier_fraction: None,
                error: Some(reason.clone()),
            },
        }
    }
}

fn to_result(rec: Record, at: &str) -> Result<FrameResult> {
    let outcome = match rec.status {
        Status::Failed => FrameOutcome::Failed {
            reason: rec.error.unwrap_or_default(),
        },
        Status::Ok => {
            let (Some(r), Some(t), Some(score)) = (rec.r, rec.t, rec.score) else {
                return Err(Error::schema(at, "status \"ok\" requires R, t and score"));
            };
            if !(score.is_finite() && t.iter().all(|x| x.is_finite())) {
                return Err(Error::schema(at, "score and t must be finite"));
            }
            let pose = RigidTransform::from_row_major(&r, &t)
                .map_err(|e| Error::schema(format!("{at}.R"), e.to_string()))?;
            FrameOutcome::Estimated {
                pose,
                score,
                n_icp_iters: rec.n_icp_iters.unwrap_or(0),
                inlier_fraction: rec.inlier_fraction.unwrap_or(0.0),
            }
        }
    };
    Ok(FrameResult {
        frame_id: rec.frame_id,
        outcome,
    })
}

pub fn results_to_string(results: &[FrameResult]) -> String {
    let records: Vec<Record> = results.iter().map(Record::from).collect();
    let mut s = serde_json::to_string_pretty(&records).expect("records serialize");
    s.push('\n');
    s
}

/// Parses results; `source` names the document in error messages.
pub fn results_from_str(text: &str, source: &str) -> Result<Vec<FrameResult>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| {
        Error::schema(
            format!("{source}:$"),
            format!("expected an array of records: {e}"),
        )
    })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.into_iter().enumerate() {
        let at = format!("{source}:$[{i}]");
        let rec: Record =
            serde_json::from_value(v).map_err(|e| Error::schema(&at, e.to_string()))?;
        if !seen.insert(rec.frame_id) {
            return Err(Error::schema(
                &at,
                format!("duplicate frame_id {}", rec.frame_id),
            ));
        }
        out.push(to_result(rec, &at)?);
    }
    Ok(out)
}

pub fn write_results(path: impl AsRef<Path>, results: &[FrameResult]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, results_to_string(results)).map_err(|e| Error::io(path, e))
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<FrameResult>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    results_from_str(&text, &path.display().to_string())
}
