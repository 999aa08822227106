//! Seeded generator of entity-rich articles.
//!
//! Bodies are built from short sentence templates whose slots are filled with
//! the article's own entities, so the entity list (and the image, which
//! "depicts" a subset of them) is informative about the body text.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Article, CorpusError, FieldTag};
use crate::ner::EntityCategory;

/// Knobs of the template design. Expected counts derive from these.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub min_entities: usize,
    pub max_entities: usize,
    /// Additional body sentences after the first mentions, uniform in this range.
    pub min_extra_sentences: usize,
    pub max_extra_sentences: usize,
    /// Probability that an extra sentence re-mentions one of the article's entities.
    pub repeat_mention_prob: f64,
    /// Entities depicted by the article image beyond those named in the caption.
    pub extra_depicted: usize,
}

impl Default for SyntheticDesign {
    fn default() -> Self {
        SyntheticDesign {
            min_entities: 4,
            max_entities: 6,
            min_extra_sentences: 1,
            max_extra_sentences: 4,
            repeat_mention_prob: 0.6,
            extra_depicted: 2,
        }
    }
}

impl SyntheticDesign {
    /// Expected gazetteer mentions per body (one first mention per entity plus repeats),
    /// assuming the gazetteer has at least `max_entities` entries.
    pub fn expected_body_mentions(&self) -> f64 {
        let ents = (self.min_entities + self.max_entities) as f64 / 2.0;
        let extra = (self.min_extra_sentences + self.max_extra_sentences) as f64 / 2.0;
        ents + extra * self.repeat_mention_prob
    }
}

/// What the generator put into one article.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub id: String,
    /// Entities instantiated anywhere in the article.
    pub entities: Vec<(String, EntityCategory)>,
    /// Surfaces "visible" in the article image.
    pub depicted: Vec<String>,
    pub body_mentions: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub articles: Vec<Article>,
    pub log: Vec<SyntheticRecord>,
}

const DOMAINS: &[&str] = &["dailyherald.com", "metrowire.net", "thecourier.org", "valleypost.com", "northgazette.com"];
const TOPICS: &[&str] = &["politics", "business", "sport", "culture", "technology"];
const SUMMARIES: &[&str] = &[
    "Coverage of recent developments in the region.",
    "A look at the latest decisions and reactions.",
    "Reporting on an announcement and its aftermath.",
    "What happened this week and what comes next.",
];

const TITLES: &[&str] = &[
    "{} unveils new plan",
    "Questions grow around {}",
    "{} at the center of debate",
    "What comes next for {}",
    "{} draws attention",
];

const CAPTION_ONE: &[&str] = &["{} is pictured during the visit.", "A view of {} on the day.", "{} in an undated photo."];
const CAPTION_TWO: &[&str] = &["{} and {} are pictured together.", "{} with {} after the meeting."];

const FILLER: &[&str] = &[
    "The details were not immediately clear.",
    "More information is expected later this week.",
    "The decision came after months of debate.",
    "Critics said the timeline was too short.",
];

fn templates(cat: EntityCategory) -> &'static [&'static str] {
    use EntityCategory::*;
    match cat {
        Person => &[
            "{} said the plan would move forward.",
            "Officials confirmed that {} had signed the agreement.",
            "{} declined to comment on the matter.",
            "According to {}, the talks were productive.",
            "{} is expected to speak again next week.",
        ],
        Org => &[
            "{} announced a new partnership on Monday.",
            "Shares of {} rose sharply after the news.",
            "A spokesperson for {} confirmed the report.",
            "{} has faced criticism over the decision.",
        ],
        Gpe | Loc => &[
            "The meeting took place in {}.",
            "Residents of {} reacted with surprise.",
            "Officials in {} praised the outcome.",
            "Travel to {} was briefly disrupted.",
        ],
        Event => &[
            "Preparations for the {} are under way.",
            "The {} drew large crowds this year.",
            "Tickets for the {} sold out quickly.",
        ],
        Product => &[
            "The new {} will go on sale next month.",
            "Early reviews of the {} were positive.",
            "Sales of the {} exceeded expectations.",
        ],
        _ => &["Reports also mentioned {}.", "The role of {} was discussed at length."],
    }
}

fn fill(template: &str, surfaces: &[&str]) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    let mut it = surfaces.iter();
    while let Some(pos) = rest.find("{}") {
        out.push_str(&rest[..pos]);
        out.push_str(it.next().copied().unwrap_or(""));
        rest = &rest[pos + 2..];
    }
    out.push_str(rest);
    out
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "ven", "dra", "mir", "tos", "bel", "qui", "nar", "sev", "ul", "tam", "ori", "zen", "pha", "gor", "lis",
    "mun", "ter", "vak", "sol", "ith", "bra", "cor", "del", "fen", "hal", "jor", "kes", "ryn",
];
const FIRST_NAMES: &[&str] = &[
    "Ada", "Bruno", "Celia", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Luis", "Mara",
    "Nico", "Olga", "Pavel", "Quinn", "Rosa", "Silas", "Tara", "Umar", "Vera", "Wes", "Yara",
];
const ORG_SUFFIX: &[&str] = &["Group", "Systems", "Institute", "Council", "Partners", "Foundation", "Labs", "Holdings"];
const EVENT_SUFFIX: &[&str] = &["Summit", "Festival", "Open", "Games", "Expo"];
const PRODUCT_SUFFIX: &[&str] = &["Phone", "Tablet", "Drone", "Sedan", "Console"];

/// Procedural gazetteer of made-up names. Every distinguishing word is unique,
/// so no entry occurs inside another at a word boundary.
pub fn default_gazetteer(seed: u64, size: usize) -> Vec<(String, EntityCategory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a3e_11d4);
    let mut used: HashSet<String> = FIRST_NAMES.iter().map(|s| s.to_string()).collect();
    for w in ORG_SUFFIX.iter().chain(EVENT_SUFFIX).chain(PRODUCT_SUFFIX) {
        used.insert(w.to_string());
    }
    let mut word = |rng: &mut ChaCha8Rng| loop {
        let n = rng.gen_range(2..=3);
        let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        w[..1].make_ascii_uppercase();
        if used.insert(w.clone()) {
            return w;
        }
    };
    // PERSON, ORG, GPE, EVENT, PRODUCT in roughly 40/25/20/8/7 proportions.
    let plan = [
        (EntityCategory::Person, 40),
        (EntityCategory::Org, 25),
        (EntityCategory::Gpe, 20),
        (EntityCategory::Event, 8),
        (EntityCategory::Product, 7),
    ];
    let mut out = Vec::with_capacity(size);
    let mut i = 0usize;
    while out.len() < size {
        let r = i % 100;
        i += 1;
        let mut acc = 0;
        let cat = plan.iter().find(|(_, w)| {
            acc += w;
            r < acc
        });
        let cat = cat.map(|c| c.0).unwrap_or(EntityCategory::Person);
        let surface = match cat {
            EntityCategory::Person => format!("{} {}", FIRST_NAMES.choose(&mut rng).unwrap(), word(&mut rng)),
            EntityCategory::Org => format!("{} {}", word(&mut rng), ORG_SUFFIX.choose(&mut rng).unwrap()),
            EntityCategory::Event => format!("{} {}", word(&mut rng), EVENT_SUFFIX.choose(&mut rng).unwrap()),
            EntityCategory::Product => format!("{} {}", word(&mut rng), PRODUCT_SUFFIX.choose(&mut rng).unwrap()),
            _ => word(&mut rng),
        };
        out.push((surface, cat));
    }
    out
}

/// Generates `n` articles. Pure function of its arguments.
pub fn make_synthetic_corpus(
    seed: u64,
    n: usize,
    gazetteer: &[(String, EntityCategory)],
) -> Result<Vec<Article>, CorpusError> {
    Ok(make_synthetic_corpus_with_log(seed, n, gazetteer, &SyntheticDesign::default())?.articles)
}

pub fn make_synthetic_corpus_with_log(
    seed: u64,
    n: usize,
    gazetteer: &[(String, EntityCategory)],
    design: &SyntheticDesign,
) -> Result<SyntheticCorpus, CorpusError> {
    if n == 0 {
        return Err(CorpusError::Synthetic("n must be at least 1".into()));
    }
    if gazetteer.is_empty() {
        return Err(CorpusError::Synthetic("gazetteer is empty".into()));
    }
    if design.min_entities == 0 || design.min_entities > design.max_entities {
        return Err(CorpusError::Synthetic("entity count range is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::with_capacity(n);
    let mut log = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("syn-{seed}-{i:05}");
        let n_ent = rng.gen_range(design.min_entities..=design.max_entities).min(gazetteer.len());
        let chosen: Vec<&(String, EntityCategory)> = gazetteer.choose_multiple(&mut rng, n_ent).collect();

        let lead = chosen[0];
        let title = fill(TITLES.choose(&mut rng).unwrap(), &[&lead.0]);

        let n_cap = if chosen.len() >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
        let caption = if n_cap == 2 {
            fill(CAPTION_TWO.choose(&mut rng).unwrap(), &[&chosen[0].0, &chosen[1].0])
        } else {
            fill(CAPTION_ONE.choose(&mut rng).unwrap(), &[&chosen[0].0])
        };
        let depicted: Vec<String> =
            chosen.iter().take((n_cap + design.extra_depicted).min(chosen.len())).map(|e| e.0.clone()).collect();

        let mut order: Vec<usize> = (0..chosen.len()).collect();
        order.shuffle(&mut rng);
        let mut sentences = Vec::new();
        let mut mentions = 0;
        for &j in &order {
            let (surface, cat) = chosen[j];
            sentences.push(fill(templates(*cat).choose(&mut rng).unwrap(), &[surface]));
            mentions += 1;
        }
        let extra = rng.gen_range(design.min_extra_sentences..=design.max_extra_sentences);
        for _ in 0..extra {
            if rng.gen_bool(design.repeat_mention_prob) {
                let (surface, cat) = chosen[rng.gen_range(0..chosen.len())];
                let pos = rng.gen_range(0..=sentences.len());
                sentences.insert(pos, fill(templates(*cat).choose(&mut rng).unwrap(), &[surface]));
                mentions += 1;
            } else {
                let pos = rng.gen_range(0..=sentences.len());
                sentences.insert(pos, FILLER.choose(&mut rng).unwrap().to_string());
            }
        }
        let body = sentences.join(" ");

        let year = rng.gen_range(2010..=2018);
        let month = rng.gen_range(1..=12);
        let day = rng.gen_range(1..=28);
        let mut a = Article::new(id.clone(), body)
            .with_field(FieldTag::Domain, *DOMAINS.choose(&mut rng).unwrap())
            .with_field(FieldTag::Date, format!("{year:04}-{month:02}-{day:02}"))
            .with_field(FieldTag::Topic, *TOPICS.choose(&mut rng).unwrap())
            .with_field(FieldTag::Title, title)
            .with_field(FieldTag::Caption, caption)
            .with_field(FieldTag::Summary, *SUMMARIES.choose(&mut rng).unwrap());
        a.image_refs = vec![format!("synth://img/{id}/0#{}", depicted.join("|"))];
        articles.push(a);
        log.push(SyntheticRecord {
            id,
            entities: chosen.iter().map(|e| (e.0.clone(), e.1)).collect(),
            depicted,
            body_mentions: mentions,
        });
    }
    Ok(SyntheticCorpus { articles, log })
}
