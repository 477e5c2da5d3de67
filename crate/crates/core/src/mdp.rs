//! Domain types of the routing decision process and their canonical text
//! renderings.
//!
//! A [`State`] pairs a question with the most recent answer (absent before the
//! first expert call). The policy reads the state through [`render_state`];
//! experts read the question through [`render_first_prompt`] on the first
//! call and through the knowledge-transfer prompt ([`render_ktp`]) afterwards.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    /// Gold answer; needed by reference-based scoring during training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Synthetic benchmark only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<usize>,
    /// Synthetic benchmark only, in `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let q = Question {
            id: id.into(),
            text: text.into(),
            reference: None,
            topic: None,
            difficulty: None,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn with_synthetic(mut self, topic: usize, difficulty: f64) -> Result<Self> {
        self.topic = Some(topic);
        self.difficulty = Some(difficulty);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::InvalidQuestion(format!(
                "question `{}` has empty text",
                self.id
            )));
        }
        if let Some(d) = self.difficulty {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidQuestion(format!(
                    "question `{}` difficulty {d} outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Index of the expert that produced this answer.
    pub producer: usize,
    /// Hidden ground-truth quality of synthetic answers. Never shown to the
    /// policy except through whatever the answer text itself reveals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_quality: Option<f64>,
}

impl Answer {
    pub fn new(text: impl Into<String>, producer: usize) -> Self {
        Answer {
            text: text.into(),
            producer,
            latent_quality: None,
        }
    }

    pub fn with_latent_quality(mut self, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidAnswer(format!(
                "latent quality {q} outside [0, 1]"
            )));
        }
        self.latent_quality = Some(q);
        Ok(self)
    }
}

/// `s_t`: the question plus the answer produced at step `t - 1`.
///
/// Constructed only through [`State::initial`] and [`State::advance`], which
/// keeps `step == 0` equivalent to `answer.is_none()`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    question: Arc<Question>,
    answer: Option<Answer>,
    step: usize,
}

impl State {
    pub fn initial(question: Arc<Question>) -> Self {
        State {
            question,
            answer: None,
            step: 0,
        }
    }

    /// The state reached after an expert produced `answer` from this one.
    pub fn advance(&self, answer: Answer) -> Self {
        State {
            question: Arc::clone(&self.question),
            answer: Some(answer),
            step: self.step + 1,
        }
    }

    pub fn question(&self) -> &Question {
        &self.question
    }

    pub fn question_arc(&self) -> &Arc<Question> {
        &self.question
    }

    pub fn answer(&self) -> Option<&Answer> {
        self.answer.as_ref()
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action {
    pub expert_index: usize,
}

impl Action {
    pub const fn new(expert_index: usize) -> Self {
        Action { expert_index }
    }

    pub fn checked(expert_index: usize, pool_size: usize) -> Result<Self> {
        if expert_index < pool_size {
            Ok(Action { expert_index })
        } else {
            Err(Error::UnknownExpert {
                index: expert_index,
                pool_size,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub steps: Vec<Action>,
    pub terminal_answer: Answer,
}

impl Route {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn experts(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|a| a.expert_index)
    }
}

/// Canonical encoder input: `"Q: {question}\nA: {answer}"`, with `None` for
/// the initial state.
pub fn render_state(state: &State) -> String {
    let answer = state.answer.as_ref().map_or("None", |a| a.text.as_str());
    format!("Q: {}\nA: {}", state.question.text, answer)
}

const KTP_LEAD: &str = "There is an answer to the question from another student:";
const KTP_TAIL: &str = "Using another student's answer as additional advice, you need to give a more satisfactory answer directly. DO NOT mention other students.";

/// Knowledge-transfer prompt handed to every expert after the first.
pub fn render_ktp(question: &Question, prev_answer: Option<&Answer>) -> Result<String> {
    let prev = prev_answer.ok_or(Error::MissingPreviousAnswer)?;
    Ok(format!(
        "{}\n{KTP_LEAD}\n{}\n{KTP_TAIL}",
        question.text, prev.text
    ))
}

/// Prompt for the first expert call: the question verbatim.
pub fn render_first_prompt(question: &Question) -> Result<String> {
    question.validate()?;
    Ok(question.text.clone())
}

/// Prompt for the expert acting in `state`.
pub fn render_prompt(state: &State) -> Result<String> {
    match state.answer() {
        None => render_first_prompt(state.question()),
        Some(prev) => render_ktp(state.question(), Some(prev)),
    }
}
