//! Deterministic synthetic corpus generator for end-to-end checks. Each
//! topic owns an invented three-word phrase; base cases carry their topic
//! phrase in the facts, while query cases hide it in the reasoning next to
//! citations of same-topic base cases and show a decoy phrase in the
//! facts. Facts-only retrieval therefore favors decoy-topic cases, and
//! concept augmentation recovers the cited topic.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, CorpusError, Document};

/// Generation knobs. Defaults produce 232 documents (24 topics x 8 base
/// cases + 40 queries), large enough for directional retrieval checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub queries: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { topics: 24, docs_per_topic: 8, queries: 40, seed: 7 }
    }
}

const ONSETS: [&str; 12] = ["b", "d", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Invented word, unique per (class, index) pair. The endings avoid the
/// tagger's adjective/adverb/noun suffix rules and the plural rule, so
/// every pseudoword falls through to the default noun tag.
fn pseudoword(class: char, index: usize) -> String {
    let mut word = String::new();
    let mut n = index;
    for _ in 0..2 {
        word.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        word.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
    }
    let ending = match class {
        'a' => "rk",
        'n' => "x",
        _ => "m",
    };
    word.push_str(ending);
    word
}

/// The three-word signature phrase of a topic.
pub fn topic_phrase(topic: usize) -> String {
    format!("{} {} {}", pseudoword('a', topic), pseudoword('n', topic), pseudoword('h', topic))
}

fn base_facts(phrase: &str, flavor: usize) -> String {
    let openers = [
        "The applicant relied on the",
        "The national court examined the",
        "The parties disputed the",
        "The chamber assessed the",
    ];
    format!(
        "{} {phrase} from the outset. The {phrase} was clearly decisive for the case. \
         The proceedings before the national court were lengthy and the applicant \
         sought a remedy under the convention.",
        openers[flavor % openers.len()],
    )
}

fn query_facts(decoy: &str, own_noun: &str) -> String {
    format!(
        "The applicant relied on the {decoy} before the national court. \
         The {own_noun} was mentioned only in passing. The proceedings were \
         lengthy and the applicant sought a remedy under the convention.",
    )
}

fn query_reasoning(phrase: &str, cited: &[String]) -> String {
    let mut out = String::from(
        "The chamber recalls its settled approach to the admissibility of the complaint.",
    );
    for id in cited {
        out.push_str("\n\n");
        out.push_str(&format!(
            "The {phrase} was clearly engaged; see [[CITE:{id}]]. \
             That judgment applied the {phrase} to comparable proceedings.",
        ));
    }
    out
}

/// Builds the corpus. Base cases are dated 1960 onward, queries 2018
/// onward, so every query's candidate pool contains all base cases. Each
/// query cites 4 to 6 base cases of its own topic, drawn with a rng seeded
/// only by `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Corpus, CorpusError> {
    assert!(spec.topics >= 2, "decoy topics need at least two topics");
    assert!(spec.docs_per_topic >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base_start = NaiveDate::from_ymd_opt(1960, 1, 1).expect("valid date");
    let query_start = NaiveDate::from_ymd_opt(2018, 1, 10).expect("valid date");

    let mut docs = Vec::new();
    let mut topic_doc_ids: Vec<Vec<String>> = vec![Vec::new(); spec.topics];
    for (topic, ids) in topic_doc_ids.iter_mut().enumerate() {
        for j in 0..spec.docs_per_topic {
            let global = topic * spec.docs_per_topic + j;
            let id = format!("c{global:03}");
            ids.push(id.clone());
            docs.push(Document {
                id,
                date: base_start + Days::new(37 * global as u64),
                facts: base_facts(&topic_phrase(topic), global),
                reasoning: String::new(),
            });
        }
    }

    for q in 0..spec.queries {
        let topic = q % spec.topics;
        let decoy_topic = (topic + spec.topics / 2) % spec.topics;
        let own = &topic_doc_ids[topic];
        let n_cited = rng.gen_range(4..=6).min(own.len());
        // Sample cited ids without replacement, order preserved.
        let mut pool: Vec<String> = own.clone();
        let mut cited = Vec::with_capacity(n_cited);
        for _ in 0..n_cited {
            cited.push(pool.remove(rng.gen_range(0..pool.len())));
        }
        cited.sort();
        let own_noun = pseudoword('n', topic);
        docs.push(Document {
            id: format!("q{q:03}"),
            date: query_start + Days::new(33 * q as u64),
            facts: query_facts(&topic_phrase(decoy_topic), &own_noun),
            reasoning: query_reasoning(&topic_phrase(topic), &cited),
        });
    }
    Corpus::from_documents(docs)
}
