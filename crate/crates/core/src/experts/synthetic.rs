use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Answer, Question};

/// Scripted answerer with per-topic skill and a transfer efficiency that
/// controls how much of a previous answer's quality it can build on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertProfile {
    pub name: String,
    pub skills: Vec<f64>,
    pub transfer_efficiency: f64,
    pub cost: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl ExpertProfile {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.name.trim().is_empty() {
            return Err(Error::Config("synthetic expert needs a name".into()));
        }
        if self.skills.is_empty() || !self.skills.iter().all(|s| unit(*s)) {
            return Err(Error::Config(format!(
                "expert `{}`: skills must be nonempty and in [0, 1]",
                self.name
            )));
        }
        if !unit(self.transfer_efficiency) {
            return Err(Error::Config(format!(
                "expert `{}`: transfer_efficiency must be in [0, 1]",
                self.name
            )));
        }
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return Err(Error::Config(format!(
                "expert `{}`: cost must be > 0",
                self.name
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "expert `{}`: noise_sigma must be >= 0",
                self.name
            )));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_sigma == 0.0
    }
}

/// Quality of this expert's answer alone, before any transfer.
pub fn solo_quality<R: Rng + ?Sized>(
    profile: &ExpertProfile,
    question: &Question,
    rng: &mut R,
) -> Result<f64> {
    let (topic, difficulty) = match (question.topic, question.difficulty) {
        (Some(t), Some(d)) => (t, d),
        _ => return Err(Error::MissingSyntheticFields(question.id.clone())),
    };
    let skill = *profile.skills.get(topic).ok_or_else(|| {
        Error::Config(format!(
            "expert `{}` has no skill for topic {topic}",
            profile.name
        ))
    })?;
    let mut solo = skill * (1.0 - difficulty);
    if profile.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, profile.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        solo += normal.sample(rng);
    }
    Ok(solo.clamp(0.0, 1.0))
}

/// `q = solo + η · prev · (1 − solo)`: bounded in `[0, 1]`, never below the
/// solo quality and non-decreasing in the previous quality.
pub fn transfer_quality(solo: f64, transfer_efficiency: f64, prev_quality: Option<f64>) -> f64 {
    match prev_quality {
        None => solo,
        Some(prev) => (solo + transfer_efficiency * prev * (1.0 - solo)).clamp(0.0, 1.0),
    }
}

/// Answer text exposes the producing expert and its quality, followed by the
/// first `round(q · n)` words of the reference, so overlap scoring tracks
/// the latent quality.
pub fn render_synthetic_text(name: &str, quality: f64, reference: Option<&str>) -> String {
    let mut text = format!("{name} answer, confidence {quality:.2}\n");
    if let Some(reference) = reference {
        let words: Vec<&str> = reference.split_whitespace().collect();
        let keep = ((quality * words.len() as f64).round() as usize).min(words.len());
        text.push_str(&words[..keep].join(" "));
    }
    text
}

pub fn synthetic_answer<R: Rng + ?Sized>(
    profile: &ExpertProfile,
    producer: usize,
    question: &Question,
    prev_quality: Option<f64>,
    rng: &mut R,
) -> Result<Answer> {
    let solo = solo_quality(profile, question, rng)?;
    let q = transfer_quality(solo, profile.transfer_efficiency, prev_quality);
    let text = render_synthetic_text(&profile.name, q, question.reference.as_deref());
    Answer::new(text, producer).with_latent_quality(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::overlap_score;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile(skill: f64, eta: f64) -> ExpertProfile {
        ExpertProfile {
            name: "p".into(),
            skills: vec![skill],
            transfer_efficiency: eta,
            cost: 1.0,
            noise_sigma: 0.0,
        }
    }

    fn question(difficulty: f64) -> Question {
        Question::new("q", "x")
            .unwrap()
            .with_reference("one two three four five six seven eight nine ten")
            .with_synthetic(0, difficulty)
            .unwrap()
    }

    #[test]
    fn solo_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = synthetic_answer(&profile(0.8, 0.3), 2, &question(0.0), None, &mut rng).unwrap();
        assert_relative_eq!(a.latent_quality.unwrap(), 0.8, max_relative = 1e-12);
        assert_eq!(a.producer, 2);
        assert!(a
            .text
            .starts_with("p answer, confidence 0.80\none two three four five six seven eight"));
    }

    #[test]
    fn transfer_case() {
        assert_relative_eq!(
            transfer_quality(0.5, 0.5, Some(0.8)),
            0.7,
            max_relative = 1e-12
        );
        for eta in [0.0, 0.3, 1.0] {
            assert_eq!(transfer_quality(0.42, eta, Some(0.0)), 0.42);
        }
    }

    #[test]
    fn missing_synthetic_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bare = Question::new("q", "x").unwrap();
        assert!(matches!(
            synthetic_answer(&profile(0.5, 0.5), 0, &bare, None, &mut rng),
            Err(Error::MissingSyntheticFields(_))
        ));
    }

    #[test]
    fn noiseless_is_pure() {
        let p = profile(0.63, 0.4);
        let a = synthetic_answer(
            &p,
            0,
            &question(0.2),
            Some(0.5),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let b = synthetic_answer(
            &p,
            0,
            &question(0.2),
            Some(0.5),
            &mut ChaCha8Rng::seed_from_u64(99),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_stays_in_range() {
        let mut p = profile(0.9, 0.4);
        p.noise_sigma = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let q = synthetic_answer(&p, 0, &question(0.0), Some(0.9), &mut rng)
                .unwrap()
                .latent_quality
                .unwrap();
            assert!((0.0..=1.0).contains(&q));
        }
    }

    proptest! {
        #[test]
        fn transfer_monotone(skill in 0.0f64..=1.0, eta in 0.0f64..=1.0, d in 0.0f64..=1.0,
                             p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let solo = skill * (1.0 - d);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let q_lo = transfer_quality(solo, eta, Some(lo));
            let q_hi = transfer_quality(solo, eta, Some(hi));
            prop_assert!(q_lo <= q_hi);
            prop_assert!(q_lo >= solo);
            prop_assert!((0.0..=1.0).contains(&q_hi));
        }

        #[test]
        fn overlap_tracks_quality(n_words in 1usize..40, steps in 2usize..30) {
            let reference: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
            let reference = reference.join(" ");
            let mut last = -1.0;
            for k in 0..=steps {
                let q = k as f64 / steps as f64;
                let text = render_synthetic_text("atlas-13b", q, Some(&reference));
                let s = overlap_score(&text, &reference).unwrap();
                prop_assert!(s >= last);
                last = s;
            }
        }
    }
}
