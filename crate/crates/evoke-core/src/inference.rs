//! Test-time injection: route an unseen sample, retrieve cluster knowledge,
//! adapt it into a prompt block, and hand it to the agent. Strictly
//! read-only with respect to the bank.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, EmbeddingProvider};
use crate::engine::{AgentProvider, Sample};
use crate::error::EngineError;
use crate::knowledge::{KnowledgeBank, Retrieved};

/// The tailored knowledge block plus full provenance: which cluster served
/// it, which experience entries went in, and the skill revision used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedKnowledge {
    pub text: String,
    pub source_cluster: u32,
    pub experience_ids: Vec<u64>,
    pub skill_revision: u64,
    /// True when the routed cluster held no knowledge at all; the agent
    /// then runs with an empty block.
    pub cold_start: bool,
}

/// Deterministic rendering of retrieved knowledge: numbered experiences
/// under one header, the full skill document under another, empty sections
/// omitted. This is the default adaptation; it is byte-stable for a fixed
/// bank and query.
pub fn render_knowledge_block<'a>(
    experiences: impl Iterator<Item = &'a str>,
    skill_text: &str,
) -> String {
    let mut out = String::new();
    let mut any = false;
    for (i, text) in experiences.enumerate() {
        if i == 0 {
            out.push_str("## Relevant experiences\n");
            any = true;
        }
        out.push_str(&format!("{}. {}\n", i + 1, text));
    }
    if !skill_text.trim().is_empty() {
        if any {
            out.push('\n');
        }
        out.push_str("## Skill guide\n");
        out.push_str(skill_text);
        out.push('\n');
    }
    out
}

/// Adaptation hook: turns retrieved knowledge into the injected block.
/// [`TemplateAdapter`] is the hermetic default; deployments may implement
/// this with a synthesizer call instead.
pub trait KnowledgeAdapter {
    fn adapt(&self, sample: &Sample, retrieved: &Retrieved<'_>) -> Result<String, EngineError>;
}

/// The default deterministic template adaptation.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateAdapter;

impl KnowledgeAdapter for TemplateAdapter {
    fn adapt(&self, _sample: &Sample, retrieved: &Retrieved<'_>) -> Result<String, EngineError> {
        Ok(render_knowledge_block(
            retrieved.experiences.iter().map(|(e, _)| e.text.as_str()),
            retrieved.skill_text,
        ))
    }
}

/// Full inference result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub answer: String,
    pub adapted: AdaptedKnowledge,
    pub transcript: String,
}

/// Route, retrieve, adapt, and answer one sample. Never mutates the bank;
/// an empty cluster degrades to an empty knowledge block flagged in
/// provenance.
pub fn inject_and_answer(
    sample: &Sample,
    bank: &KnowledgeBank,
    embedder: &dyn EmbeddingProvider,
    agent: &dyn AgentProvider,
    adapter: &dyn KnowledgeAdapter,
    top_k: usize,
    max_turns: u32,
    seed: u64,
) -> Result<InferenceOutcome, EngineError> {
    let query = embed(embedder, &sample.description)?;
    let cluster_id = bank.route(&query)?;
    let retrieved = bank.retrieve(cluster_id, &query, top_k)?;
    let text = adapter.adapt(sample, &retrieved)?;
    let adapted = AdaptedKnowledge {
        text: text.clone(),
        source_cluster: cluster_id.get(),
        experience_ids: retrieved.experiences.iter().map(|(e, _)| e.id).collect(),
        skill_revision: retrieved.skill_revision,
        cold_start: retrieved.experiences.is_empty() && retrieved.skill_text.trim().is_empty(),
    };
    let response = agent
        .respond(sample, &text, max_turns, seed)
        .map_err(|e| EngineError::Observer(e.to_string()))?;
    Ok(InferenceOutcome {
        answer: response.answer,
        adapted,
        transcript: response.transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KnowledgeConfig;
    use crate::embedding::HashEmbedder;
    use crate::engine::EchoAgent;
    use crate::kmeans::{fit_kmeans, ClusterId};
    use crate::knowledge::MockSynthesizer;

    fn sample(id: &str, description: &str) -> Sample {
        Sample {
            id: id.to_string(),
            description: description.to_string(),
            answer: String::new(),
            sim_difficulty: 0.0,
        }
    }

    fn two_cluster_bank(provider: &HashEmbedder) -> (KnowledgeBank, Sample, Sample) {
        let grid = sample("g", "navigate the maze grid from the red marker");
        let web = sample("w", "search the web for the release year");
        let points = alloc::vec![
            embed(provider, &grid.description).unwrap(),
            embed(provider, &web.description).unwrap(),
        ];
        let fit = fit_kmeans(&points, 2, 0, 50).unwrap();
        let bank = KnowledgeBank::new(fit.centroids, &KnowledgeConfig::default());
        (bank, grid, web)
    }

    #[test]
    fn empty_bank_cold_start() {
        let provider = HashEmbedder::default();
        let (bank, grid, _) = two_cluster_bank(&provider);
        let before = bank.clone();
        let outcome = inject_and_answer(
            &grid,
            &bank,
            &provider,
            &EchoAgent,
            &TemplateAdapter,
            5,
            10,
            0,
        )
        .unwrap();
        assert!(outcome.adapted.cold_start);
        assert!(outcome.adapted.experience_ids.is_empty());
        assert_eq!(outcome.adapted.text, "");
        assert_eq!(outcome.answer, format!("echo:{}", grid.description));
        assert_eq!(bank, before, "inference is read-only");
    }

    #[test]
    fn injected_block_carries_experience_and_skill_verbatim() {
        let provider = HashEmbedder::default();
        let (mut bank, grid, _) = two_cluster_bank(&provider);
        let query = embed(&provider, &grid.description).unwrap();
        let cluster_id = bank.route(&query).unwrap();
        bank.integrate_experience(
            cluster_id,
            "score candidate grid sizes before simulating",
            &provider,
            &MockSynthesizer,
            1,
        )
        .unwrap();
        bank.update_skill(cluster_id, "always locate both markers first", &MockSynthesizer)
            .unwrap();

        let outcome = inject_and_answer(
            &grid,
            &bank,
            &provider,
            &EchoAgent,
            &TemplateAdapter,
            5,
            10,
            0,
        )
        .unwrap();
        assert!(!outcome.adapted.cold_start);
        assert_eq!(outcome.adapted.experience_ids.len(), 1);
        assert!(outcome
            .adapted
            .text
            .contains("1. score candidate grid sizes before simulating"));
        assert!(outcome.adapted.text.contains("## Skill guide"));
        assert!(outcome.adapted.text.contains("always locate both markers first"));
        assert_eq!(outcome.adapted.skill_revision, 1);
        // the echo transcript embeds the block verbatim
        assert!(outcome.transcript.contains(&outcome.adapted.text));

        // rendering determinism
        let again = inject_and_answer(
            &grid,
            &bank,
            &provider,
            &EchoAgent,
            &TemplateAdapter,
            5,
            10,
            0,
        )
        .unwrap();
        assert_eq!(outcome, again);
    }

    #[test]
    fn routing_provenance_points_at_nearest_cluster() {
        let provider = HashEmbedder::default();
        let (bank, _, web) = two_cluster_bank(&provider);
        let query = embed(&provider, &web.description).unwrap();
        let expected = bank.route(&query).unwrap();
        let outcome = inject_and_answer(
            &web,
            &bank,
            &provider,
            &EchoAgent,
            &TemplateAdapter,
            5,
            10,
            0,
        )
        .unwrap();
        assert_eq!(outcome.adapted.source_cluster, expected.get());

        // a query embedded exactly at a centroid routes to that cluster
        for (id, centroid) in bank.centroids().iter() {
            let got = crate::kmeans::route(centroid, bank.centroids()).unwrap();
            assert_eq!(got, id);
        }
        let _ = ClusterId::new(1);
    }

    #[test]
    fn provenance_ids_resolve_in_recorded_cluster() {
        let provider = HashEmbedder::default();
        let (mut bank, grid, _) = two_cluster_bank(&provider);
        let query = embed(&provider, &grid.description).unwrap();
        let cluster_id = bank.route(&query).unwrap();
        for i in 0..4 {
            bank.integrate_experience(
                cluster_id,
                &format!("distinct lesson number {i} about topic{i}"),
                &provider,
                &MockSynthesizer,
                i,
            )
            .unwrap();
        }
        let outcome = inject_and_answer(
            &grid,
            &bank,
            &provider,
            &EchoAgent,
            &TemplateAdapter,
            2,
            10,
            0,
        )
        .unwrap();
        assert_eq!(outcome.adapted.experience_ids.len(), 2);
        let cluster = bank
            .cluster(ClusterId::new(outcome.adapted.source_cluster))
            .unwrap();
        for id in &outcome.adapted.experience_ids {
            assert!(cluster.pool().entries().iter().any(|e| e.id == *id));
        }
    }
}
