//! Exhaustive search over tool sequences up to a length bound.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Raster;
use crate::reward::{RewardError, RewardProvider};
use crate::toolset::{Registry, ToolError, ToolId};

pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("search needs {needed} tool applications, budget is {budget}")]
    Budget { needed: u64, budget: u64 },
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Maximum number of tool applications.
    pub budget: u64,
    /// Search first-level subtrees on the rayon pool.
    pub parallel: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub sequence: Vec<ToolId>,
    pub score: f64,
    pub image: Raster,
    /// Scorer calls made (one per enumerated sequence).
    pub evaluations: u64,
}

/// Σ_{ℓ=1..L} n^ℓ: tool applications of a prefix-sharing search, saturating.
pub fn search_cost(n_tools: usize, l_max: usize) -> u64 {
    let n = n_tools as u64;
    let mut total: u64 = 0;
    let mut level: u64 = 1;
    for _ in 0..l_max {
        level = level.saturating_mul(n);
        total = total.saturating_add(level);
    }
    total
}

/// Higher score first, then the lexicographically smaller sequence.
fn better(a_score: f64, a_seq: &[ToolId], b_score: f64, b_seq: &[ToolId]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_seq.cmp(b_seq))
}

struct Best {
    sequence: Vec<ToolId>,
    score: f64,
    image: Raster,
}

struct Search<'a> {
    registry: &'a Registry,
    scorer: &'a dyn RewardProvider,
    l_max: usize,
    evaluations: u64,
}

impl Search<'_> {
    /// Pre-order DFS visits sequences in lexicographic order, so keeping
    /// only strict improvements yields the smallest sequence among ties.
    fn visit(&mut self, img: Raster, seq: &mut Vec<ToolId>, best: &mut Option<Best>) -> Result<(), OracleError> {
        let score = self.scorer.score(&img)?;
        self.evaluations += 1;
        if best.as_ref().is_none_or(|b| score > b.score) {
            *best = Some(Best {
                sequence: seq.clone(),
                score,
                image: img.clone(),
            });
        }
        if seq.len() == self.l_max {
            return Ok(());
        }
        for k in 0..self.registry.n_tools() {
            let next = self.registry.apply(ToolId(k), &img)?;
            seq.push(ToolId(k));
            self.visit(next, seq, best)?;
            seq.pop();
        }
        Ok(())
    }
}

/// Best sequence of length 0..=`l_max` over the non-STOP tools.
pub fn best_sequence(
    degraded: &Raster,
    registry: &Registry,
    l_max: usize,
    scorer: &dyn RewardProvider,
    opts: &SearchOptions,
) -> Result<OracleResult, OracleError> {
    let n = registry.n_tools();
    let needed = search_cost(n, l_max);
    if needed > opts.budget {
        return Err(OracleError::Budget {
            needed,
            budget: opts.budget,
        });
    }
    let mut search = Search {
        registry,
        scorer,
        l_max,
        evaluations: 0,
    };
    if !opts.parallel || l_max == 0 || n < 2 {
        let mut best = None;
        search.visit(degraded.clone(), &mut Vec::new(), &mut best)?;
        let b = best.expect("root is always scored");
        return Ok(OracleResult {
            sequence: b.sequence,
            score: b.score,
            image: b.image,
            evaluations: search.evaluations,
        });
    }

    let root_score = scorer.score(degraded)?;
    let subtrees: Vec<(Option<Best>, u64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut sub = Search {
                registry,
                scorer,
                l_max,
                evaluations: 0,
            };
            let img = registry.apply(ToolId(k), degraded)?;
            let mut best = None;
            sub.visit(img, &mut vec![ToolId(k)], &mut best)?;
            Ok((best, sub.evaluations))
        })
        .collect::<Result<_, OracleError>>()?;
    let mut winner = Best {
        sequence: Vec::new(),
        score: root_score,
        image: degraded.clone(),
    };
    let mut evaluations = 1;
    for (b, e) in subtrees {
        evaluations += e;
        let b = b.expect("subtree root is always scored");
        if better(b.score, &b.sequence, winner.score, &winner.sequence) == Ordering::Less {
            winner = b;
        }
    }
    Ok(OracleResult {
        sequence: winner.sequence,
        score: winner.score,
        image: winner.image,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub policy_actions: Vec<String>,
    pub oracle_actions: Vec<String>,
    pub policy_score: f64,
    pub oracle_score: f64,
    /// oracle_score − policy_score.
    pub gap: f64,
    pub exact_match: bool,
}

impl PlanReport {
    /// The policy reached the oracle score within `tol`.
    pub fn score_match(&self, tol: f64) -> bool {
        self.gap <= tol
    }
}

/// Scores the policy's output with `scorer` and compares it to the oracle.
pub fn compare_plan(
    registry: &Registry,
    policy_plan: &[ToolId],
    policy_output: &Raster,
    oracle: &OracleResult,
    scorer: &dyn RewardProvider,
) -> Result<PlanReport, OracleError> {
    let policy_score = scorer.score(policy_output)?;
    let names = |s: &[ToolId]| s.iter().map(|&t| registry.name(t).to_string()).collect();
    Ok(PlanReport {
        policy_actions: names(policy_plan),
        oracle_actions: names(&oracle.sequence),
        policy_score,
        oracle_score: oracle.score,
        gap: oracle.score - policy_score,
        exact_match: policy_plan == oracle.sequence.as_slice(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub images: usize,
    pub mean_gap: f64,
    pub match_rate: f64,
    pub score_match_rate: f64,
    pub tolerance: f64,
}

pub fn aggregate(reports: &[PlanReport], tol: f64) -> AggregateReport {
    let n = reports.len();
    let d = n.max(1) as f64;
    AggregateReport {
        images: n,
        mean_gap: reports.iter().map(|r| r.gap).sum::<f64>() / d,
        match_rate: reports.iter().filter(|r| r.exact_match).count() as f64 / d,
        score_match_rate: reports.iter().filter(|r| r.score_match(tol)).count() as f64 / d,
        tolerance: tol,
    }
}
