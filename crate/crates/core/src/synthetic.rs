//! Seeded synthetic data with known structure: planted topic corpora,
//! block-structured interaction matrices and topic-aligned recommendation
//! scenarios. Used by the test suites and for smoke-testing pipelines.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenList;

/// Documents drawn from two disjoint vocabularies.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub docs: Vec<(String, TokenList)>,
    pub vocabularies: [Vec<String>; 2],
}

/// `docs_per_vocab` documents from vocabulary A (`aNN` terms) followed by as
/// many from a disjoint vocabulary B (`bNN`), each `doc_len` tokens drawn
/// uniformly from its vocabulary.
pub fn planted_lda_corpus(docs_per_vocab: usize, vocab_size: usize, doc_len: usize, seed: u64) -> PlantedCorpus {
    let vocab = |prefix: char| -> Vec<String> { (0..vocab_size).map(|i| format!("{prefix}{i:02}")).collect() };
    let vocabularies = [vocab('a'), vocab('b')];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(2 * docs_per_vocab);
    for (v, words) in vocabularies.iter().enumerate() {
        for d in 0..docs_per_vocab {
            let tokens = (0..doc_len)
                .map(|_| words[rng.gen_range(0..words.len())].clone())
                .collect();
            docs.push((format!("v{v}-d{d:03}"), TokenList { tokens }));
        }
    }
    PlantedCorpus { docs, vocabularies }
}

/// One observed (user, template, weight) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub user: String,
    pub template: String,
    pub weight: f64,
}

/// Block-structured implicit feedback with a per-user held-out split.
#[derive(Debug, Clone)]
pub struct PlantedBlocks {
    pub users: Vec<String>,
    pub templates: Vec<String>,
    /// block index of each user / template
    pub user_block: Vec<usize>,
    pub template_block: Vec<usize>,
    pub train: Vec<Cell>,
    pub test: Vec<Cell>,
}

/// `users` x `templates` matrix split into `blocks` diagonal blocks. Each
/// user interacts with each in-block template with probability `density`
/// (weights 1..=5) and never outside its block. A `holdout` fraction of each
/// user's cells (at least one) goes to the test split.
pub fn planted_blocks(
    users: usize,
    templates: usize,
    blocks: usize,
    density: f64,
    holdout: f64,
    seed: u64,
) -> PlantedBlocks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_ids: Vec<String> = (0..users).map(|u| format!("u{u:02}")).collect();
    let template_ids: Vec<String> = (0..templates).map(|t| format!("t{t:02}")).collect();
    let user_block: Vec<usize> = (0..users).map(|u| u * blocks / users).collect();
    let template_block: Vec<usize> = (0..templates).map(|t| t * blocks / templates).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..users {
        let mut cells = Vec::new();
        for t in 0..templates {
            if template_block[t] == user_block[u] && rng.gen::<f64>() < density {
                cells.push(Cell {
                    user: user_ids[u].clone(),
                    template: template_ids[t].clone(),
                    weight: rng.gen_range(1..=5) as f64,
                });
            }
        }
        cells.shuffle(&mut rng);
        let held = ((cells.len() as f64 * holdout).round() as usize).max(1).min(cells.len().saturating_sub(1));
        test.extend(cells.drain(..held));
        train.extend(cells);
    }
    PlantedBlocks {
        users: user_ids,
        templates: template_ids,
        user_block,
        template_block,
        train,
        test,
    }
}

/// A template of the aligned-topic scenario with its source OA text.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureTemplate {
    pub topic_id: String,
    pub template_id: String,
    pub source_text: String,
}

/// Recommendation scenario where content identifies the topic and usage
/// identifies the user's preferred templates within it.
#[derive(Debug, Clone)]
pub struct AlignedTopics {
    pub templates: Vec<FixtureTemplate>,
    pub train: Vec<Cell>,
    pub cases: Vec<crate::cascade::EvalCase>,
}

/// `topics` topics with disjoint 30-word vocabularies and
/// `templates_per_topic` templates each. Users fall in three groups; group g
/// uses the templates whose index j satisfies j % 3 == g, in every topic,
/// each with probability 0.7. Every user gets one test case in topic
/// `u % topics`: half of their interactions there are held out and the query
/// is a fresh OA drawn from that topic's vocabulary.
pub fn aligned_topics(topics: usize, templates_per_topic: usize, users: usize, seed: u64) -> AlignedTopics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<Vec<String>> = (0..topics)
        .map(|c| (0..30).map(|w| format!("c{c}w{w:02}")).collect())
        .collect();
    let text = |c: usize, rng: &mut ChaCha8Rng| -> String {
        let words: Vec<&str> = (0..40).map(|_| vocab[c][rng.gen_range(0..30)].as_str()).collect();
        words.join(" ")
    };
    let template_id = |c: usize, j: usize| format!("c{c}-t{j:02}");
    let mut templates = Vec::new();
    for c in 0..topics {
        for j in 0..templates_per_topic {
            let source_text = text(c, &mut rng);
            templates.push(FixtureTemplate {
                topic_id: format!("c{c}"),
                template_id: template_id(c, j),
                source_text,
            });
        }
    }
    let mut train = Vec::new();
    let mut cases = Vec::new();
    for u in 0..users {
        let user = format!("u{u:02}");
        let group = u % 3;
        let test_topic = u % topics;
        for c in 0..topics {
            let mut cells: Vec<Cell> = (0..templates_per_topic)
                .filter(|j| j % 3 == group)
                .filter(|_| rng.gen::<f64>() < 0.7)
                .map(|j| Cell {
                    user: user.clone(),
                    template: template_id(c, j),
                    weight: 0.0,
                })
                .collect();
            for cell in &mut cells {
                cell.weight = rng.gen_range(1..=5) as f64;
            }
            if c == test_topic && cells.len() >= 2 {
                cells.shuffle(&mut rng);
                let held: Vec<Cell> = cells.drain(..cells.len() / 2).collect();
                cases.push(crate::cascade::EvalCase {
                    user: user.clone(),
                    oa_text: text(c, &mut rng),
                    relevant: held.into_iter().map(|c| c.template).collect(),
                });
            }
            train.extend(cells);
        }
    }
    AlignedTopics {
        templates,
        train,
        cases,
    }
}
