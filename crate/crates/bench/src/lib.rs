//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relay_core::benchmark::{benchmark_pool, benchmark_reward, QuestionGenerator};
use relay_core::mdp::{Answer, Question, State};
use relay_core::{EncoderConfig, EpisodeConfig, ExpertPool, LatentQualityScorer, Policy};

pub struct Fixture {
    pub pool: ExpertPool,
    pub questions: Vec<Arc<Question>>,
    pub env: EpisodeConfig,
    pub policy: Policy,
}

pub fn fixture(questions: usize) -> Fixture {
    let pool = ExpertPool::synthetic(benchmark_pool()).expect("benchmark pool is valid");
    let questions = QuestionGenerator::default()
        .generate(questions, 3, "bench")
        .expect("generator is valid")
        .into_iter()
        .map(Arc::new)
        .collect();
    let env = EpisodeConfig::new(benchmark_reward(), Arc::new(LatentQualityScorer))
        .expect("valid reward");
    let policy = Policy::new(
        EncoderConfig::default(),
        pool.len(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .expect("valid encoder");
    Fixture {
        pool,
        questions,
        env,
        policy,
    }
}

/// A state with a previous answer, as seen from the second step on.
pub fn answered_state(question: &Arc<Question>) -> State {
    State::initial(Arc::clone(question)).advance(Answer::new(
        "the answer mentions several relevant terms and a short justification",
        0,
    ))
}
