//! Deterministic offline backend producing itinerary-shaped text.

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, DecodingParams};
use crate::prompt_factory::{FactorAssignment, Prompt, PromptItem};

const MIN_TOKENS: usize = 100;
const MAX_TOKENS: usize = 600;

/// Per-group marker tokens spliced into stub responses with probability
/// `rate`, giving the stub a controllable group signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerInjection {
    pub dimension: String,
    pub rate: f64,
    pub markers: IndexMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    model: String,
    seed: u64,
    markers: Option<MarkerInjection>,
}

impl StubBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            model: "stub".to_string(),
            seed,
            markers: None,
        }
    }

    pub fn with_markers(mut self, markers: MarkerInjection) -> Self {
        self.markers = Some(markers);
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }
}

impl Backend for StubBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn generate(&self, item: &PromptItem, _: &DecodingParams) -> Result<String, BackendError> {
        Ok(stub_response(
            &item.assignment,
            &item.prompt(),
            self.seed,
            self.markers.as_ref(),
        ))
    }
}

struct City {
    attractions: &'static [&'static str],
    dining: &'static [&'static str],
    lodging: &'static [&'static str],
    neighborhoods: &'static [&'static str],
}

const NEW_YORK: City = City {
    attractions: &[
        "Central Park",
        "the Metropolitan Museum of Art",
        "the Brooklyn Bridge",
        "Times Square",
        "the American Museum of Natural History",
        "the High Line",
        "the Statue of Liberty",
        "the Museum of Modern Art",
    ],
    dining: &[
        "Joe's Pizza",
        "Katz's Delicatessen",
        "Shake Shack",
        "Levain Bakery",
        "Xi'an Famous Foods",
        "Russ & Daughters",
    ],
    lodging: &["a hotel near Bryant Park", "a boutique hotel in SoHo", "a hostel on the Upper West Side"],
    neighborhoods: &["the West Village", "the Upper East Side", "Williamsburg", "Chelsea"],
};

const CHICAGO: City = City {
    attractions: &[
        "Millennium Park",
        "the Art Institute of Chicago",
        "Navy Pier",
        "the Field Museum",
        "Lincoln Park Zoo",
        "the Chicago Riverwalk",
        "Willis Tower",
    ],
    dining: &[
        "Lou Malnati's",
        "Portillo's",
        "The Purple Pig",
        "Girl & the Goat",
        "Au Cheval",
    ],
    lodging: &["a hotel on the Magnificent Mile", "a boutique hotel in the Loop", "a hostel in Wicker Park"],
    neighborhoods: &["the Loop", "Lincoln Park", "Wicker Park", "River North"],
};

const MIAMI: City = City {
    attractions: &[
        "South Beach",
        "the Wynwood Walls",
        "Vizcaya Museum and Gardens",
        "the Perez Art Museum",
        "Bayside Marketplace",
        "the Everglades",
    ],
    dining: &["Joe's Stone Crab", "Versailles", "Mandolin Aegean Bistro", "Zak the Baker"],
    lodging: &["a hotel in South Beach", "a boutique hotel in Brickell", "a hostel near Ocean Drive"],
    neighborhoods: &["Brickell", "Coconut Grove", "Wynwood", "Design District"],
};

const LOS_ANGELES: City = City {
    attractions: &[
        "the Getty Center",
        "Griffith Observatory",
        "Santa Monica Pier",
        "the Hollywood Walk of Fame",
        "the Venice Beach Boardwalk",
        "the Los Angeles County Museum of Art",
    ],
    dining: &["Grand Central Market", "Pink's Hot Dogs", "In-N-Out Burger", "Bestia", "Langer's Deli"],
    lodging: &["a hotel in Downtown", "a boutique hotel in Silver Lake", "a hostel in Hollywood"],
    neighborhoods: &["Silver Lake", "Downtown", "Venice", "Pasadena"],
};

const GENERIC: City = City {
    attractions: &["the city museum", "the main park", "the historic district", "the waterfront"],
    dining: &["a local diner", "a popular food hall", "a neighborhood bistro"],
    lodging: &["a central hotel", "a guesthouse", "a budget hostel"],
    neighborhoods: &["downtown", "the old town", "the arts district"],
};

fn city(destination: &str) -> &'static City {
    match destination {
        "New York" => &NEW_YORK,
        "Chicago" => &CHICAGO,
        "Miami" => &MIAMI,
        "Los Angeles" => &LOS_ANGELES,
        _ => &GENERIC,
    }
}

const OPENERS: &[&str] = &[
    "I'd be delighted to help plan your trip to {dest}!",
    "What a great choice! I'm happy to help you plan your visit to {dest}.",
    "Thank you for reaching out! Here is a plan for your time in {dest}.",
];

const MORNING: &[&str] = &[
    "Start your morning at {place}, which is a great way to get to know the city.",
    "Begin the day with a visit to {place} before the crowds arrive.",
    "Spend a relaxed morning exploring {place} at your own pace.",
];

const AFTERNOON: &[&str] = &[
    "In the afternoon, wander through {hood} and browse the local shops.",
    "After lunch, head to {place} for a different perspective on the city.",
    "Take the afternoon to walk around {hood}, where you can enjoy the atmosphere.",
];

const EVENING: &[&str] = &[
    "For dinner, try {food}, a favorite among visitors and locals alike.",
    "In the evening, grab a meal at {food} and enjoy the lively scene.",
    "End the day with dinner at {food}, which offers a memorable experience.",
];

const STAY: &[&str] = &[
    "For your stay, consider {lodge}, which offers convenient access to public transit.",
    "I suggest booking {lodge} so you are close to the main sights.",
];

const TIPS: &[&str] = &[
    "Remember to check opening hours in advance, as they can change with the season.",
    "Public transportation is usually the easiest way to move between neighborhoods.",
    "Booking popular places ahead of time will save you from long waits.",
    "Keep a reusable water bottle with you while you are out exploring.",
    "Many museums offer discounted admission on certain days of the week.",
];

fn day_count(duration: Option<&str>) -> usize {
    match duration {
        Some(d) if d.starts_with('1') => 3,
        Some(d) if d.starts_with('4') => 5,
        Some(_) => 7,
        None => 3,
    }
}

fn per_prompt_seed(prompt: &Prompt, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.system.as_bytes());
    h.update([0u8]);
    h.update(prompt.user.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn fill(template: &str, key: &str, value: &str) -> String {
    template.replace(key, value)
}

fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Synthetic itinerary for one prompt, without marker injection.
pub fn stub_generate(assignment: &FactorAssignment, prompt: &Prompt, seed: u64) -> String {
    stub_response(assignment, prompt, seed, None)
}

fn stub_response(
    assignment: &FactorAssignment,
    prompt: &Prompt,
    seed: u64,
    markers: Option<&MarkerInjection>,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(per_prompt_seed(prompt, seed));
    let dest = assignment.get("destination").unwrap_or("your destination");
    let c = city(dest);
    let mut sentences: Vec<String> = Vec::new();

    sentences.push(fill(OPENERS.choose(&mut rng).unwrap(), "{dest}", dest));
    let persona: Vec<&str> = ["age", "ethnicity", "gender"]
        .iter()
        .filter_map(|k| assignment.get(k))
        .collect();
    if !persona.is_empty() {
        let income = assignment.get("income").unwrap_or("moderate");
        let persona = persona.join(" ");
        let article = if persona.starts_with(['a', 'e', 'i', 'o', 'u', 'A', 'E', 'I', 'O', 'U']) {
            "an"
        } else {
            "a"
        };
        sentences.push(format!(
            "As {article} {persona} traveler with a {income} income, I'll make sure to suggest activities that suit you."
        ));
    }
    if let Some(duration) = assignment.get("duration") {
        let season = assignment.get("season").unwrap_or("upcoming");
        sentences.push(format!(
            "Given your {season} visit and {duration} stay, here's a suggested itinerary."
        ));
    }
    if let Some(budget) = assignment.get("budget") {
        sentences.push(format!(
            "Since your budget is {budget}, I'll include a mix of free and paid options."
        ));
    }
    if let Some(task) = assignment.get("task") {
        sentences.push(format!("This plan focuses on {task} while leaving time to explore."));
    }

    for day in 1..=day_count(assignment.get("duration")) {
        let place = c.attractions.choose(&mut rng).unwrap();
        let hood = c.neighborhoods.choose(&mut rng).unwrap();
        let food = c.dining.choose(&mut rng).unwrap();
        sentences.push(format!("Day {day}:"));
        sentences.push(fill(MORNING.choose(&mut rng).unwrap(), "{place}", place));
        let afternoon = AFTERNOON.choose(&mut rng).unwrap();
        let other = c.attractions.choose(&mut rng).unwrap();
        sentences.push(fill(&fill(afternoon, "{hood}", hood), "{place}", other));
        sentences.push(fill(EVENING.choose(&mut rng).unwrap(), "{food}", food));
    }
    let lodge = c.lodging.choose(&mut rng).unwrap();
    sentences.push(fill(STAY.choose(&mut rng).unwrap(), "{lodge}", lodge));
    sentences.push(TIPS.choose(&mut rng).unwrap().to_string());
    sentences.push("Enjoy your trip!".to_string());

    while token_count(&sentences.join(" ")) < MIN_TOKENS {
        sentences.push(TIPS.choose(&mut rng).unwrap().to_string());
    }
    while sentences.len() > 1 && token_count(&sentences.join(" ")) > MAX_TOKENS - 8 {
        sentences.remove(sentences.len() - 2);
    }

    if let Some(inj) = markers {
        let group = assignment.get(&inj.dimension);
        let tokens = group.and_then(|g| inj.markers.get(g));
        if let Some(tokens) = tokens.filter(|t| !t.is_empty()) {
            if rng.random::<f64>() < inj.rate {
                let count = rng.random_range(1..=3usize);
                for _ in 0..count {
                    let tok = tokens.choose(&mut rng).unwrap();
                    let at = rng.random_range(1..=sentences.len());
                    sentences.insert(at, format!("Try the {tok}."));
                }
            }
        }
    }
    sentences.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt_factory::{generate_prompts, PromptConfig};

    fn figure_one() -> (FactorAssignment, Prompt) {
        let items = generate_prompts(&PromptConfig::default(), 1, 0, None).unwrap();
        let mut a = items[0].assignment.clone();
        a.insert("destination", "New York");
        a.insert("duration", "1–3 days");
        a.insert("ethnicity", "African American");
        a.insert("gender", "woman");
        let p = crate::prompt_factory::render_prompt(
            &a,
            crate::prompt_factory::DEFAULT_TEMPLATE,
            crate::prompt_factory::DEFAULT_SYSTEM_PROMPT,
        )
        .unwrap();
        (a, p)
    }

    #[test]
    fn echoes_destination_and_is_deterministic() {
        let (a, p) = figure_one();
        let t1 = stub_generate(&a, &p, 7);
        let t2 = stub_generate(&a, &p, 7);
        assert!(t1.contains("New York"));
        assert_eq!(t1, t2);
        assert_ne!(t1, stub_generate(&a, &p, 8));
    }

    #[test]
    fn lengths_stay_in_range() {
        let items = generate_prompts(&PromptConfig::default(), 300, 5, None).unwrap();
        for it in &items {
            let n = token_count(&stub_generate(&it.assignment, &it.prompt(), 1));
            assert!((MIN_TOKENS..=MAX_TOKENS).contains(&n), "{n} tokens");
        }
    }

    #[test]
    fn zero_rate_injects_no_markers() {
        let mut markers = IndexMap::new();
        for (i, g) in ["man", "woman", "gender minority"].iter().enumerate() {
            markers.insert(g.to_string(), vec![format!("zqm{i}a"), format!("zqm{i}b")]);
        }
        let inj = MarkerInjection {
            dimension: "gender".into(),
            rate: 0.0,
            markers,
        };
        let all: Vec<String> = inj.markers.values().flatten().cloned().collect();
        let stub = StubBackend::new(3).with_markers(inj.clone());
        let items = generate_prompts(&PromptConfig::default(), 1000, 11, None).unwrap();
        for it in &items {
            let text = stub.generate(it, &DecodingParams::default()).unwrap();
            assert!(all.iter().all(|m| !text.contains(m.as_str())));
        }
        let loud = StubBackend::new(3).with_markers(MarkerInjection { rate: 1.0, ..inj });
        let text = loud.generate(&items[0], &DecodingParams::default()).unwrap();
        assert!(all.iter().any(|m| text.contains(m.as_str())));
    }
}
