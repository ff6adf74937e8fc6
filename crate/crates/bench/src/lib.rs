//! Synthetic scripted workloads for the benchmarks.

use pag_core::backend::{classify_prompt, paraphrase_prompt, FixtureEntry};
use pag_core::{LabelVocabulary, Query, Sample};

/// A vocabulary of `n` labels named `intent_0`, `intent_1`, ...
pub fn vocabulary(n: usize) -> LabelVocabulary {
    LabelVocabulary::new("bench", (0..n).map(|i| format!("intent_{i}"))).expect("distinct labels")
}

fn entry(prompt: String, text: String, logprobs: Vec<f64>) -> FixtureEntry {
    FixtureEntry {
        prompt,
        samples: vec![Sample::new(text, logprobs)],
    }
}

/// `n_queries` queries with complete fixtures for the paraphrase path.
/// Every `low_every`-th query is classified with low confidence so it takes
/// that path; the rest clear any threshold below 0.99.
pub fn workload(
    vocab: &LabelVocabulary,
    n_queries: usize,
    n_paraphrases: usize,
    low_every: usize,
) -> (Vec<Query>, Vec<FixtureEntry>) {
    let labels = vocab.labels();
    let mut queries = Vec::with_capacity(n_queries);
    let mut entries = Vec::new();
    for i in 0..n_queries {
        let text = format!("benchmark query number {i}");
        let gold = &labels[i % labels.len()];
        let low = low_every > 0 && i % low_every == 0;
        let (first, lp) = if low {
            (format!("{gold}_typo"), vec![-0.7, -0.4])
        } else {
            (gold.clone(), vec![-0.001])
        };
        entries.push(entry(classify_prompt(&text, vocab.name()), first, lp));
        let paraphrases: Vec<String> = (1..=n_paraphrases)
            .map(|k| format!("variant {k} of query {i}"))
            .collect();
        let numbered = paraphrases
            .iter()
            .enumerate()
            .map(|(k, p)| format!("{}. {p}", k + 1))
            .collect::<Vec<_>>()
            .join("\n");
        entries.push(entry(paraphrase_prompt(&text, n_paraphrases), numbered, vec![]));
        for (k, p) in paraphrases.iter().enumerate() {
            let label = if k % 3 == 2 {
                &labels[(i + 1) % labels.len()]
            } else {
                gold
            };
            entries.push(entry(
                classify_prompt(p, vocab.name()),
                label.clone(),
                vec![-0.05 * (k + 1) as f64],
            ));
        }
        queries.push(Query::new(i.to_string(), text));
    }
    (queries, entries)
}
