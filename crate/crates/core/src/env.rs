//! Episode mechanics: one degraded image, a tool per step, score-delta rewards.

use std::sync::Arc;

use thiserror::Error;

use crate::featurize::{assemble_state, extract_features, ActionRecord, FeatureError, FeatureVector, State};
use crate::raster::Raster;
use crate::reward::{RewardError, RewardProvider};
use crate::toolset::{Registry, ToolError, ToolId};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already finished")]
    Done,
    #[error("step called before reset")]
    NotReset,
    #[error("tool {name} failed: {source}")]
    Tool {
        name: String,
        #[source]
        source: ToolError,
    },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub image: Raster,
    pub step: usize,
    pub record: ActionRecord,
    pub last_score: f64,
    pub initial_score: f64,
    pub cumulative_reward: f64,
    pub done: bool,
    features: FeatureVector,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    pub reward: f64,
    pub done: bool,
}

pub struct Env {
    registry: Arc<Registry>,
    provider: Arc<dyn RewardProvider>,
    t_max: usize,
    state: Option<EnvState>,
    score_calls: usize,
}

impl Env {
    pub fn new(registry: Arc<Registry>, provider: Arc<dyn RewardProvider>, t_max: usize) -> Self {
        Self {
            registry,
            provider,
            t_max,
            state: None,
            score_calls: 0,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Number of provider score calls since construction.
    pub fn score_calls(&self) -> usize {
        self.score_calls
    }

    pub fn current(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    fn score(&mut self, img: &Raster, features: &FeatureVector) -> Result<f64, EnvError> {
        self.score_calls += 1;
        Ok(self.provider.score_with_features(img, features)?)
    }

    pub fn reset(&mut self, degraded: Raster) -> Result<State, EnvError> {
        self.state = None;
        let features = extract_features(&degraded)?;
        let score = self.score(&degraded, &features)?;
        let st = EnvState {
            image: degraded,
            step: 0,
            record: ActionRecord::new(self.registry.n_actions()),
            last_score: score,
            initial_score: score,
            cumulative_reward: 0.0,
            done: self.t_max == 0,
            features,
        };
        let s = assemble_state(&st.features, &st.record);
        self.state = Some(st);
        Ok(s)
    }

    pub fn state(&self) -> Result<State, EnvError> {
        let st = self.state.as_ref().ok_or(EnvError::NotReset)?;
        Ok(assemble_state(&st.features, &st.record))
    }

    /// Applies `action`. A tool failure ends the episode with an error.
    pub fn step(&mut self, action: ToolId) -> Result<StepOutcome, EnvError> {
        let registry = Arc::clone(&self.registry);
        let st = self.state.as_ref().ok_or(EnvError::NotReset)?;
        if st.done {
            return Err(EnvError::Done);
        }
        if registry.is_stop(action) {
            let st = self.state.as_mut().expect("checked above");
            st.step += 1;
            st.done = true;
            return Ok(StepOutcome {
                state: assemble_state(&st.features, &st.record),
                reward: 0.0,
                done: true,
            });
        }
        let next = match registry.apply(action, &st.image) {
            Ok(img) => img,
            Err(source) => {
                self.state.as_mut().expect("checked above").done = true;
                return Err(EnvError::Tool {
                    name: registry.name(action).to_string(),
                    source,
                });
            }
        };
        let scored = extract_features(&next)
            .map_err(EnvError::from)
            .and_then(|f| self.score(&next, &f).map(|s| (f, s)));
        let st = self.state.as_mut().expect("checked above");
        let (features, score) = match scored {
            Ok(v) => v,
            Err(e) => {
                st.done = true;
                return Err(e);
            }
        };
        let reward = score - st.last_score;
        st.record.set(action.0)?;
        st.image = next;
        st.features = features;
        st.last_score = score;
        st.cumulative_reward += reward;
        st.step += 1;
        st.done = st.step >= self.t_max;
        debug_assert!(
            (st.cumulative_reward - (st.last_score - st.initial_score)).abs() <= 1e-9,
            "telescoping sum broken"
        );
        Ok(StepOutcome {
            state: assemble_state(&st.features, &st.record),
            reward,
            done: st.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::degrade::{add_noise, NoiseKind};
    use crate::featurize::{state_dim, FEATURE_DIM};
    use crate::reward::Proxy;
    use crate::toolset::default_registry;

    fn env(t_max: usize) -> Env {
        Env::new(Arc::new(default_registry()), Arc::new(Proxy::default()), t_max)
    }

    #[test]
    fn reset_shape_and_determinism() {
        let mut e = env(5);
        let img = corpus::scene(48, 48, 0);
        let a = e.reset(img.clone()).unwrap();
        let b = e.reset(img).unwrap();
        assert_eq!(a.len(), state_dim(11));
        assert_eq!(a, b);
        assert_eq!(e.current().unwrap().record.popcount(), 0);
        assert!(a.as_slice()[FEATURE_DIM..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stop_ends_with_zero_reward() {
        let mut e = env(5);
        let img = corpus::scene(48, 48, 1);
        e.reset(img.clone()).unwrap();
        let out = e.step(ToolId(10)).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.done);
        assert_eq!(e.current().unwrap().image, img);
        assert!(matches!(e.step(ToolId(0)), Err(EnvError::Done)));
        assert_eq!(e.score_calls(), 1);
    }

    #[test]
    fn identity_tool_gives_zero_reward() {
        let mut e = env(5);
        e.reset(Raster::filled(40, 40, [0.6, 0.5, 0.4])).unwrap();
        let median3 = e.registry().by_name("median3").unwrap();
        assert_eq!(e.step(median3).unwrap().reward, 0.0);
    }

    #[test]
    fn cap_and_score_call_count() {
        let t_max = 3;
        let mut e = env(t_max);
        let img = add_noise(&corpus::scene(48, 48, 2), NoiseKind::Gaussian, 0.05, 1);
        e.reset(img).unwrap();
        let mut total = 0.0;
        for k in 0..t_max {
            let out = e.step(ToolId(k)).unwrap();
            total += out.reward;
            assert_eq!(out.done, k + 1 == t_max);
            assert!(out.state.as_slice()[FEATURE_DIM + k] == 1.0);
        }
        assert_eq!(e.score_calls(), t_max + 1);
        let st = e.current().unwrap();
        assert!((total - (st.last_score - st.initial_score)).abs() < 1e-9);
        assert_eq!(st.record.popcount(), t_max);
    }

    #[test]
    fn step_before_reset() {
        let mut e = env(2);
        assert!(matches!(e.step(ToolId(0)), Err(EnvError::NotReset)));
    }

    #[test]
    fn failing_tool_aborts_the_episode() {
        use crate::degrade::DegradationKind;
        use crate::toolset::{ToolOp, ToolTarget};
        let reg = Registry::from_ops(vec![(
            "broken".into(),
            ToolTarget::Degradation(DegradationKind::Noise),
            ToolOp::External {
                command: "/nonexistent/tool".into(),
                args: vec![],
            },
            "always fails".into(),
        )]);
        let mut e = Env::new(Arc::new(reg), Arc::new(Proxy::default()), 3);
        e.reset(corpus::scene(40, 40, 0)).unwrap();
        assert!(matches!(e.step(ToolId(0)), Err(EnvError::Tool { .. })));
        assert!(matches!(e.step(ToolId(1)), Err(EnvError::Done)));
    }
}
