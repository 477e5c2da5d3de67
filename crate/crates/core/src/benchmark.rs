//! The shipped deterministic synthetic benchmark and its question generator.
//!
//! Three topics, four difficulty levels and four experts: one specialist per
//! topic plus a generalist with strong knowledge transfer. No specialist
//! reaches the quality threshold alone on harder questions, so good routes
//! hand the specialist's answer to the generalist.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::experts::ExpertProfile;
use crate::mdp::Question;
use crate::reward::RewardConfig;

pub const TOPICS: [&str; 3] = ["astronomy", "botany", "chemistry"];

/// Difficulty value and the word that marks it in the question text.
pub const LEVELS: [(f64, &str); 4] = [
    (0.0, "introductory"),
    (0.1, "intermediate"),
    (0.2, "advanced"),
    (0.3, "graduate"),
];

const TOPIC_VOCAB: [&[&str]; 3] = [
    &[
        "orbit",
        "planet",
        "stellar",
        "nebula",
        "galaxy",
        "comet",
        "telescope",
        "redshift",
        "eclipse",
        "gravity",
        "quasar",
        "luminosity",
        "parallax",
        "asteroid",
        "supernova",
        "photon",
        "cosmic",
        "solar",
        "lunar",
        "horizon",
        "pulsar",
        "meteor",
        "zenith",
        "spectrum",
    ],
    &[
        "root",
        "stem",
        "leaf",
        "petal",
        "pollen",
        "seed",
        "xylem",
        "phloem",
        "chlorophyll",
        "stomata",
        "cambium",
        "fern",
        "moss",
        "spore",
        "sepal",
        "bark",
        "tuber",
        "bulb",
        "sap",
        "canopy",
        "germination",
        "photoperiod",
        "rhizome",
        "carpel",
    ],
    &[
        "atom",
        "molecule",
        "bond",
        "ion",
        "acid",
        "base",
        "catalyst",
        "enthalpy",
        "entropy",
        "oxidation",
        "reduction",
        "valence",
        "isotope",
        "polymer",
        "solvent",
        "titration",
        "equilibrium",
        "reagent",
        "electron",
        "proton",
        "orbital",
        "salt",
        "buffer",
        "alloy",
    ],
];

const FILLER: &[&str] = &[
    "explain", "describe", "why", "how", "does", "what", "happens", "when", "compare", "the",
    "role", "of", "process", "behind", "main", "idea", "in", "simple", "terms", "give", "an",
    "example", "and", "its", "effect", "on", "observed", "results",
];

/// Words per reference answer.
pub const REFERENCE_WORDS: usize = 20;

/// The four shipped expert profiles. Costs are parameter counts in billions.
pub fn benchmark_pool() -> Vec<ExpertProfile> {
    let p = |name: &str, skills: [f64; 3], eta: f64, cost: f64| ExpertProfile {
        name: name.to_string(),
        skills: skills.to_vec(),
        transfer_efficiency: eta,
        cost,
        noise_sigma: 0.0,
    };
    vec![
        p("atlas-13b", [0.88, 0.20, 0.25], 0.10, 13.0),
        p("birch-6b", [0.22, 0.86, 0.20], 0.05, 6.0),
        p("cedar-7b", [0.20, 0.25, 0.88], 0.10, 7.0),
        p("delta-12b", [0.50, 0.50, 0.50], 0.80, 12.0),
    ]
}

pub fn benchmark_reward() -> RewardConfig {
    RewardConfig {
        t_max: 3,
        ..RewardConfig::default()
    }
}

/// Generates questions for `topics` topics (at most three) over the shipped
/// difficulty levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuestionGenerator {
    pub topics: usize,
}

impl Default for QuestionGenerator {
    fn default() -> Self {
        QuestionGenerator {
            topics: TOPICS.len(),
        }
    }
}

impl QuestionGenerator {
    /// `n` questions with ids `{prefix}-{i}`. Topics and levels are drawn
    /// uniformly; the text names both so a text encoder can see them.
    pub fn generate(&self, n: usize, seed: u64, prefix: &str) -> Result<Vec<Question>> {
        if self.topics == 0 || self.topics > TOPICS.len() {
            return Err(Error::Config(format!(
                "benchmark supports 1..={} topics, got {}",
                TOPICS.len(),
                self.topics
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let topic = rng.random_range(0..self.topics);
                let (difficulty, level) = LEVELS[rng.random_range(0..LEVELS.len())];
                let filler: Vec<&str> = FILLER.choose_multiple(&mut rng, 6).copied().collect();
                let text = format!("{} {} question: {}", level, TOPICS[topic], filler.join(" "));
                let mut vocab: Vec<&str> = TOPIC_VOCAB[topic].to_vec();
                vocab.shuffle(&mut rng);
                let reference = vocab[..REFERENCE_WORDS].join(" ");
                Question::new(format!("{prefix}-{i}"), text)?
                    .with_reference(reference)
                    .with_synthetic(topic, difficulty)
            })
            .collect()
    }
}
