//! Expert backends: deterministic synthetic answerers and remote
//! chat-completion models.

pub mod remote;
pub mod synthetic;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use remote::{remote_answer, Credentials, RemoteExpert, RetryPolicy};
pub use synthetic::{synthetic_answer, ExpertProfile};

use crate::error::{Error, Result};
use crate::mdp::{Answer, State};
use crate::reward::CostModel;
use remote::InFlightLimit;

/// One entry of a pool definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExpertSpec {
    Synthetic(ExpertProfile),
    Remote(RemoteExpert),
}

impl ExpertSpec {
    pub fn name(&self) -> &str {
        match self {
            ExpertSpec::Synthetic(p) => &p.name,
            ExpertSpec::Remote(r) => &r.name,
        }
    }

    pub fn cost(&self) -> f64 {
        match self {
            ExpertSpec::Synthetic(p) => p.cost,
            ExpertSpec::Remote(r) => r.cost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExpertSpec::Synthetic(p) => p.validate(),
            ExpertSpec::Remote(r) => r.validate(),
        }
    }
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// The model pool `{M_0, …, M_{N-1}}`.
#[derive(Debug, Clone)]
pub struct ExpertPool {
    experts: Vec<ExpertSpec>,
    costs: CostModel,
    credentials: Credentials,
    retry: RetryPolicy,
    in_flight: Arc<InFlightLimit>,
}

impl ExpertPool {
    pub fn new(experts: Vec<ExpertSpec>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::Empty("expert pool"));
        }
        for e in &experts {
            e.validate()?;
        }
        let costs = CostModel::new(experts.iter().map(ExpertSpec::cost).collect())?;
        let credentials = if experts.iter().any(|e| matches!(e, ExpertSpec::Remote(_))) {
            Credentials::from_env()
        } else {
            Credentials::none()
        };
        Ok(ExpertPool {
            experts,
            costs,
            credentials,
            retry: RetryPolicy::default(),
            in_flight: Arc::new(InFlightLimit::new(DEFAULT_MAX_IN_FLIGHT)),
        })
    }

    pub fn synthetic(profiles: Vec<ExpertProfile>) -> Result<Self> {
        Self::new(profiles.into_iter().map(ExpertSpec::Synthetic).collect())
    }

    pub fn with_credentials(mut self, credentials: Credentials) -> Self {
        self.credentials = credentials;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.in_flight = Arc::new(InFlightLimit::new(limit));
        self
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn experts(&self) -> &[ExpertSpec] {
        &self.experts
    }

    pub fn name(&self, index: usize) -> Result<&str> {
        self.get(index).map(ExpertSpec::name)
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.costs
    }

    fn get(&self, index: usize) -> Result<&ExpertSpec> {
        self.experts.get(index).ok_or(Error::UnknownExpert {
            index,
            pool_size: self.experts.len(),
        })
    }

    /// True when every expert is synthetic and noise-free.
    pub fn is_deterministic(&self) -> bool {
        self.experts.iter().all(|e| match e {
            ExpertSpec::Synthetic(p) => p.is_deterministic(),
            ExpertSpec::Remote(_) => false,
        })
    }

    /// Invokes expert `index` on `prompt` in the context of `state`.
    ///
    /// Synthetic experts ignore the prompt text and read the previous
    /// answer's latent quality instead; remote experts only see the prompt.
    pub fn answer<R: Rng + ?Sized>(
        &self,
        index: usize,
        state: &State,
        prompt: &str,
        rng: &mut R,
    ) -> Result<Answer> {
        match self.get(index)? {
            ExpertSpec::Synthetic(profile) => {
                let prev = state.answer().and_then(|a| a.latent_quality);
                synthetic_answer(profile, index, state.question(), prev, rng)
            }
            ExpertSpec::Remote(expert) => {
                let _permit = self.in_flight.acquire();
                remote::remote_answer_with_retry(expert, prompt, &self.credentials, self.retry)
                    .map(|text| Answer::new(text, index))
                    .map_err(|source| Error::Backend {
                        expert: expert.name.clone(),
                        index,
                        source,
                    })
            }
        }
    }
}
