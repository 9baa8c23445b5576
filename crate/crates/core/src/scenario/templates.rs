//! Built-in scenario templates and the seeded generator behind them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{ScenarioBackground, Tier};
use crate::environment::{ExternalInfo, Timestamp, WEATHERS};

pub struct ItemKind {
    pub noun: &'static str,
    pub names: &'static [&'static str],
    pub attributes: &'static [&'static str],
    /// Typical limit in the template's unit.
    pub base: u32,
    pub features: &'static [&'static str],
    pub purposes: &'static [&'static str],
}

pub struct ScenarioTemplate {
    pub name: &'static str,
    pub payload_key: &'static str,
    pub description: &'static str,
    pub rejection_template: &'static str,
    pub quantity: &'static str,
    pub unit: &'static str,
    /// Salary-like quantities must reach the limit instead of staying under it.
    pub higher_is_better: bool,
    pub kinds: &'static [ItemKind],
    pub profiles: &'static [&'static str],
    pub queries: &'static [&'static str],
    pub rejections: &'static [&'static str],
    pub shifts: &'static [&'static str],
}

pub const TEMPLATE_NAMES: [&str; 6] =
    ["product_recommendation", "job_search", "flight_booking", "car_purchase", "house_hunting", "ticket_booking"];

static TEMPLATES: [ScenarioTemplate; 6] = [
    ScenarioTemplate {
        name: "product_recommendation",
        payload_key: "sales_info",
        description: "A user wants to buy a specific product online, but none of the products on sale fit the user's budget or requirements at the moment.",
        rejection_template: "The options are too expensive or miss a key requirement. If a suitable one drops below my budget, I will consider it.",
        quantity: "price is",
        unit: "\u{a5}",
        higher_is_better: false,
        kinds: &[
            ItemKind {
                noun: "washing machine",
                names: &["UltraWash Mini 6kg", "CompactClean 5kg", "EcoSpin 6kg", "TinyWash 4.5kg", "AquaPure 7kg"],
                attributes: &["rated A+ energy efficiency", "2-year warranty", "compact 60x45cm footprint", "low-noise motor"],
                base: 2600,
                features: &["a quick-wash program", "a steam-clean mode"],
                purposes: &["a small apartment", "a busy family"],
            },
            ItemKind {
                noun: "monitor",
                names: &["4K Monitor X", "ProView 27", "ColorMax U32", "StudioEdge 28"],
                attributes: &["resolution 3840*2160", "99% sRGB coverage", "height-adjustable stand", "USB-C input"],
                base: 3800,
                features: &["a built-in KVM switch", "a 144Hz refresh rate"],
                purposes: &["photo editing", "design work"],
            },
            ItemKind {
                noun: "robot vacuum",
                names: &["CleanBot S7", "DustHunter Pro", "SweepMate 3", "RoboFresh X"],
                attributes: &["LiDAR navigation", "2700Pa suction", "auto-empty dock", "120-minute battery"],
                base: 2200,
                features: &["a mopping module", "pet-hair mode"],
                purposes: &["a home with pets", "a two-bedroom flat"],
            },
        ],
        profiles: &[
            "A young professional who just moved into a new {purpose_owner} and needs a reliable {noun}. Money is tight after the move, so the budget is firm.",
            "A careful shopper who compares prices before buying. They want a {noun} for {purpose} and refuse to overpay.",
        ],
        queries: &[
            "I'm looking to buy a {noun} with good quality and reliable after-sales service. Do you have any recommendations?",
            "Hi, I need a {noun} for {purpose}. Can you recommend something?",
        ],
        rejections: &[
            "These are all over my budget, which is capped at {limit}. I'd also like {attribute}. If something suitable drops to {limit} or less, I'll consider it.",
            "Thanks, but none of these fit. I can spend at most {limit} and I need {attribute}.",
        ],
        shifts: &[
            "That's helpful, thanks. I just got a small bonus, so my budget can now go up to {limit}. I'd also like it to have {feature}. Everything else stays the same.",
            "Good to know. Actually, my limit is now {limit}, but I really want {feature} as well.",
        ],
    },
    ScenarioTemplate {
        name: "job_search",
        payload_key: "job_postings",
        description: "A user is searching for a job in a specific field and city, but current openings do not pay enough or miss the user's conditions.",
        rejection_template: "The salaries are below what I need. Let me know if a posting reaches my expected salary.",
        quantity: "monthly salary is",
        unit: " USD",
        higher_is_better: true,
        kinds: &[
            ItemKind {
                noun: "data analyst position",
                names: &["Northwind Analytics", "BluePeak Retail", "Cobalt Health", "Lumen Finance"],
                attributes: &["hybrid work", "SQL and Python required", "full-time contract", "annual bonus"],
                base: 6200,
                features: &["fully remote work", "a four-day week"],
                purposes: &["a career switch", "a move to a larger company"],
            },
            ItemKind {
                noun: "frontend developer position",
                names: &["PixelForge", "Brightline Labs", "Orchid Software", "Tidewater Apps"],
                attributes: &["React stack", "flexible hours", "stock options", "mentoring program"],
                base: 7000,
                features: &["remote work", "a relocation package"],
                purposes: &["more senior work", "a better team culture"],
            },
        ],
        profiles: &[
            "A mid-career professional with five years of experience who wants a {noun}. They have rent to cover and will not accept a pay cut.",
            "A recent graduate with a strong portfolio looking for a {noun} for {purpose}.",
        ],
        queries: &[
            "I'm looking for a {noun}. Are there any openings you can find?",
            "Hi, can you help me find a {noun}? I'm aiming for {purpose}.",
        ],
        rejections: &[
            "These pay too little for me. I need at least {limit} per month and {attribute}.",
            "Thanks, but the salaries are below {limit}. I'd also want {attribute}.",
        ],
        shifts: &[
            "That's great, thank you. Thinking more about it, I'd accept {limit} per month if the role offers {feature}.",
            "Nice find. Actually I'd now prefer {feature}, and I can go down to {limit} per month for that.",
        ],
    },
    ScenarioTemplate {
        name: "flight_booking",
        payload_key: "flight_deals",
        description: "A user wants to book a flight for a trip, but the available flights are too expensive or leave at inconvenient times.",
        rejection_template: "The fares are above my budget. Please tell me if a fare falls under my limit.",
        quantity: "fare is",
        unit: " USD per ticket",
        higher_is_better: false,
        kinds: &[
            ItemKind {
                noun: "business class flight from Tokyo to Shenzhen",
                names: &["Flight ZX208", "Flight YS110", "Flight GR502", "Flight MU730"],
                attributes: &["direct route", "departs between 10:00 and 15:00", "Wi-Fi included", "lie-flat seats"],
                base: 1200,
                features: &["at least 2 seats left", "lounge access"],
                purposes: &["a business meeting", "a trade fair"],
            },
            ItemKind {
                noun: "budget flight from Berlin to Lisbon",
                names: &["Flight LH1166", "Flight TP541", "Flight FR2044", "Flight U28731"],
                attributes: &["one checked bag", "direct route", "morning departure", "free seat selection"],
                base: 180,
                features: &["free rebooking", "an extra carry-on"],
                purposes: &["a family visit", "a short holiday"],
            },
        ],
        profiles: &[
            "A consultant who travels often for work. Their company reimburses only up to a fixed limit, so they need a {noun} within policy.",
            "A traveller planning {purpose} who wants a {noun} and watches prices closely.",
        ],
        queries: &[
            "Hello, could you check {noun} options for {date_text}?",
            "I need a {noun} on {date_text} for {purpose}. What's available?",
        ],
        rejections: &[
            "Those fares are over my limit of {limit}. I also need {attribute}. Please let me know if something fits.",
            "Unfortunately these exceed {limit}. I want {attribute} too.",
        ],
        shifts: &[
            "Thanks! Plans changed a little: my limit is now {limit}, and I need {feature}.",
            "Great, but I now have to bring a colleague, so I need {feature}. I can pay up to {limit}.",
        ],
    },
    ScenarioTemplate {
        name: "car_purchase",
        payload_key: "car_listings",
        description: "A user wants to buy a car, but the cars currently listed are above budget or do not match the user's needs.",
        rejection_template: "The listed cars are too expensive. Let me know when one drops within my budget.",
        quantity: "price is",
        unit: " USD",
        higher_is_better: false,
        kinds: &[
            ItemKind {
                noun: "used hybrid sedan",
                names: &["2021 Toyota Camry Hybrid", "2020 Honda Accord Hybrid", "2022 Hyundai Sonata Hybrid", "2021 Kia K5 Hybrid"],
                attributes: &["under 40,000 miles", "clean title", "one owner", "full service history"],
                base: 24000,
                features: &["adaptive cruise control", "an extended warranty"],
                purposes: &["daily commuting", "family trips"],
            },
            ItemKind {
                noun: "compact electric car",
                names: &["2022 Nissan Leaf", "2023 Chevrolet Bolt", "2021 Hyundai Kona Electric", "2022 MINI Electric"],
                attributes: &["range over 200 miles", "fast charging", "heat pump", "under 20,000 miles"],
                base: 21000,
                features: &["a home charger included", "a panoramic roof"],
                purposes: &["city driving", "a short commute"],
            },
        ],
        profiles: &[
            "A nurse who works night shifts and needs a dependable {noun} for {purpose}. Savings are limited.",
            "A parent of two replacing an old car with a {noun}. They have a strict budget.",
        ],
        queries: &[
            "I'm looking to buy a {noun} for {purpose}. Any recommendations?",
            "Hi, can you find me a {noun}? It's mainly for {purpose}.",
        ],
        rejections: &[
            "These are above my budget of {limit}. It also needs {attribute}.",
            "Too expensive for me. My maximum is {limit}, and I want {attribute}.",
        ],
        shifts: &[
            "Thank you! I've rethought it: I can stretch to {limit}, but I'd like {feature} too.",
            "Great find. My partner wants {feature}, so my budget goes up to {limit}.",
        ],
    },
    ScenarioTemplate {
        name: "house_hunting",
        payload_key: "rental_listings",
        description: "A user is looking for a place to rent, but current listings are above budget or lack required features.",
        rejection_template: "The rents are too high. Tell me if a listing falls within my budget.",
        quantity: "rent is",
        unit: " USD per month",
        higher_is_better: false,
        kinds: &[
            ItemKind {
                noun: "one-bedroom apartment",
                names: &["Maple Court 3B", "Riverside Lofts 12", "Elm Street 7A", "Harbor View 5C"],
                attributes: &["10 minutes walk to the subway", "in-unit laundry", "south-facing windows", "12-month lease"],
                base: 1600,
                features: &["a balcony", "pet-friendly terms"],
                purposes: &["a new job downtown", "living alone"],
            },
            ItemKind {
                noun: "two-bedroom flat",
                names: &["Oak Terrace 2", "Linden House 4F", "Garden Row 9", "Station Square 11"],
                attributes: &["near a primary school", "parking spot", "renovated kitchen", "quiet street"],
                base: 2300,
                features: &["a home office room", "a garden"],
                purposes: &["a small family", "sharing with a friend"],
            },
        ],
        profiles: &[
            "A software tester relocating for {purpose} who needs a {noun}. Rent must stay within a fixed monthly amount.",
            "A couple looking for a {noun} for {purpose}, careful with monthly costs.",
        ],
        queries: &[
            "I'm looking to rent a {noun} for {purpose}. What's available?",
            "Hi, could you look for a {noun}? It's for {purpose}.",
        ],
        rejections: &[
            "These rents are over my limit of {limit}. I also need {attribute}.",
            "Sorry, too expensive. I can pay at most {limit} and want {attribute}.",
        ],
        shifts: &[
            "Thanks! My situation changed: I can now pay up to {limit}, but I need {feature}.",
            "That works, but I'd now like {feature}, and my limit rises to {limit}.",
        ],
    },
    ScenarioTemplate {
        name: "ticket_booking",
        payload_key: "ticket_info",
        description: "A user wants tickets for an event, but current tickets are sold out, too expensive, or in poor seats.",
        rejection_template: "The tickets are too expensive. Let me know if the price falls within my budget.",
        quantity: "price is",
        unit: " USD",
        higher_is_better: false,
        kinds: &[
            ItemKind {
                noun: "concert ticket",
                names: &["Section A Row 5", "Section B Row 12", "Balcony Row 2", "Floor Standing"],
                attributes: &["clear stage view", "e-ticket delivery", "aisle seat", "refundable"],
                base: 150,
                features: &["two adjacent seats", "VIP entry"],
                purposes: &["a birthday treat", "a night out with friends"],
            },
            ItemKind {
                noun: "football match ticket",
                names: &["East Stand Block 3", "West Stand Block 8", "North End Row 20", "Main Stand Row 6"],
                attributes: &["covered seating", "mobile ticket", "near the halfway line", "family zone"],
                base: 90,
                features: &["two seats together", "a stadium tour"],
                purposes: &["a weekend outing", "celebrating a promotion"],
            },
        ],
        profiles: &[
            "A longtime fan who wants a {noun} for {purpose}. They set aside a fixed amount and won't go over it.",
            "A student planning {purpose} who needs a {noun} on a tight budget.",
        ],
        queries: &[
            "I want a {noun} for {month_text}. Are any available?",
            "Hi, could you check {noun} availability for {month_text}? It's for {purpose}.",
        ],
        rejections: &[
            "These are above my budget of {limit}. I'd also like {attribute}.",
            "Too pricey for me. My maximum is {limit}, and I want {attribute}.",
        ],
        shifts: &[
            "Awesome, thanks! A friend is joining, so I need {feature}. I can pay up to {limit}.",
            "Great. Actually I'd like {feature} now, with a limit of {limit}.",
        ],
    },
];

pub fn builtin_templates() -> &'static [ScenarioTemplate] {
    &TEMPLATES
}

pub fn template_by_name(name: &str) -> Option<&'static ScenarioTemplate> {
    TEMPLATES.iter().find(|t| t.name == name)
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn below(&mut self, n: u64) -> u64 {
        ((self.0.next_u64() as u128 * n as u128) >> 64) as u64
    }

    fn range(&mut self, lo: u32, hi: u32) -> u32 {
        lo + self.below((hi - lo + 1) as u64) as u32
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }

    /// `k` distinct indices into a slice of length `n`.
    fn distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n) {
            let j = i + self.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k.min(n));
        idx
    }
}

fn fill(text: &str, vars: &[(&str, &str)]) -> String {
    crate::prompts::render(text, vars)
}

fn round_to(v: u32, step: u32) -> u32 {
    ((v + step / 2) / step).max(1) * step
}

impl ScenarioTemplate {
    fn amount(&self, v: u32) -> String {
        alloc::format!("{v}{}", self.unit)
    }

    fn step(&self, base: u32) -> u32 {
        if base >= 10_000 {
            100
        } else if base >= 1000 {
            10
        } else {
            1
        }
    }

    /// Value that fails a limit, scaled by `pct` percent away from it.
    fn failing(&self, limit: u32, pct: u32, step: u32) -> u32 {
        if self.higher_is_better {
            round_to(limit * (100 - pct) / 100, step).min(limit.saturating_sub(step))
        } else {
            round_to(limit * (100 + pct) / 100, step).max(limit + step)
        }
    }

    fn passing(&self, limit: u32, pct: u32, step: u32) -> u32 {
        if self.higher_is_better {
            round_to(limit * (100 + pct) / 100, step).max(limit)
        } else {
            round_to(limit * (100 - pct) / 100, step).min(limit)
        }
    }

    fn option(&self, name: &str, value: u32, attrs: &[&str], tail: Option<&str>) -> String {
        let mut s = alloc::format!("{name}: {} {}", self.quantity, self.amount(value));
        for a in attrs {
            s.push_str(", ");
            s.push_str(a);
        }
        if let Some(t) = tail {
            s.push_str(", ");
            s.push_str(t);
        }
        s
    }

    /// Deterministic scenario for `tier` drawn from `seed`.
    pub fn build(&self, tier: Tier, seed: u64) -> ScenarioBackground {
        let mut rng = Rng(ChaCha8Rng::seed_from_u64(seed));
        let kind = rng.pick(self.kinds);
        let step = self.step(kind.base);
        let limit = round_to(kind.base * rng.range(85, 115) / 100, step);
        let purpose = *rng.pick(kind.purposes);
        let names: Vec<&str> = rng.distinct(kind.names.len(), 3).into_iter().map(|i| kind.names[i]).collect();
        let attrs: Vec<Vec<&str>> = (0..3)
            .map(|_| rng.distinct(kind.attributes.len(), 2).into_iter().map(|i| kind.attributes[i]).collect())
            .collect();
        let wanted = *rng.pick(kind.attributes);
        let feature = *rng.pick(kind.features);

        let start = Timestamp {
            year: 2025,
            month: 1,
            day: 1,
            hour: rng.range(8, 20) as u8,
            minute: rng.range(0, 59) as u8,
            second: rng.range(0, 59) as u8,
        }
        .plus_days(rng.range(0, 540));
        let later = |from: Timestamp, lo: u32, hi: u32, rng: &mut Rng| {
            let mut t = from.plus_days(rng.range(lo, hi));
            t.hour = rng.range(7, 21) as u8;
            t.minute = rng.range(0, 59) as u8;
            t.second = rng.range(0, 59) as u8;
            t
        };
        let t_updated = later(start, 4, 18, &mut rng);
        let t_shift = later(t_updated, 5, 14, &mut rng);
        let t_shift_neg = later(t_updated, 5, 14, &mut rng);
        let weather = |rng: &mut Rng| rng.pick(&WEATHERS).to_string();
        let snapshot = |t: Timestamp, w: String, payload: String| ExternalInfo {
            time: t.to_string(),
            day_of_week: t.weekday().to_string(),
            weather: w,
            payload_key: self.payload_key.to_string(),
            payload,
        };

        let initial_values: Vec<u32> = (0..3).map(|_| self.failing(limit, rng.range(6, 35), step)).collect();
        let initial = (0..3).map(|i| self.option(names[i], initial_values[i], &attrs[i], None)).collect::<Vec<_>>();

        let good = self.passing(limit, rng.range(2, 12), step);
        let mut updated = alloc::vec![self.option(names[0], good, &attrs[0], Some(wanted))];
        for i in 1..3 {
            updated.push(self.option(names[i], self.failing(limit, rng.range(3, 30), step), &attrs[i], None));
        }
        let updated_negative = (0..3)
            .map(|i| self.option(names[i], self.failing(limit, rng.range(2, 25), step), &attrs[i], None))
            .collect::<Vec<_>>();

        let w_initial = weather(&mut rng);
        let w_updated = weather(&mut rng);
        let limit_text = self.amount(limit);
        let date_text = alloc::format!("{}", start.plus_days(30)).chars().take(10).collect::<String>();
        let month_text = alloc::format!("{}", start.plus_days(45)).chars().take(7).collect::<String>();
        let vars = [
            ("noun", kind.noun),
            ("purpose", purpose),
            ("purpose_owner", "home"),
            ("limit", limit_text.as_str()),
            ("attribute", wanted),
            ("date_text", date_text.as_str()),
            ("month_text", month_text.as_str()),
        ];

        let mut sb = ScenarioBackground {
            scenario_name: Some(self.name.to_string()),
            user_profile: Some(fill(rng.pick(self.profiles), &vars)),
            initial_user_query: Some(fill(rng.pick(self.queries), &vars)),
            trigger_type: Some("EVENT".into()),
            initial_external_data: Some(snapshot(start, w_initial, initial.join("; "))),
            user_rejection_reason: Some(fill(rng.pick(self.rejections), &vars)),
            updated_external_data: Some(snapshot(t_updated, w_updated.clone(), updated.join("; "))),
            updated_external_data_negative: Some(snapshot(t_updated, w_updated, updated_negative.join("; "))),
            ..Default::default()
        };

        if tier == Tier::Complex {
            let shifted_limit = if self.higher_is_better {
                round_to(limit * rng.range(85, 95) / 100, step)
            } else {
                round_to(limit * rng.range(110, 125) / 100, step)
            };
            let shifted_text = self.amount(shifted_limit);
            let shift_vars = [("limit", shifted_text.as_str()), ("feature", feature)];
            let no_feature = alloc::format!("no {}", feature.trim_start_matches("a ").trim_start_matches("an "));
            let mut shifted =
                alloc::vec![self.option(names[1], self.passing(shifted_limit, rng.range(1, 8), step), &attrs[1], Some(feature))];
            shifted.push(self.option(names[2], self.failing(shifted_limit, rng.range(4, 20), step), &attrs[2], Some(feature)));
            let shifted_negative = alloc::vec![
                self.option(names[1], self.failing(shifted_limit, rng.range(3, 20), step), &attrs[1], Some(feature)),
                self.option(names[0], self.passing(shifted_limit, rng.range(1, 10), step), &attrs[0], Some(&no_feature)),
                self.option(names[2], self.failing(shifted_limit, rng.range(5, 25), step), &attrs[2], Some(&no_feature)),
            ];
            sb.intention_shift = Some(fill(rng.pick(self.shifts), &shift_vars));
            sb.intention_shifted_external_data = Some(snapshot(t_shift, weather(&mut rng), shifted.join("; ")));
            sb.intention_shifted_external_data_negative =
                Some(snapshot(t_shift_neg, weather(&mut rng), shifted_negative.join("; ")));
        }
        sb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::validate_scenario;

    #[test]
    fn every_template_builds_valid_scenarios() {
        for t in builtin_templates() {
            for tier in Tier::ALL {
                for seed in 0..40 {
                    let sb = t.build(tier, seed);
                    let report = validate_scenario(&sb, tier);
                    assert!(report.is_ok(), "{} {tier} {seed}: {:?}", t.name, report.issues);
                    assert_eq!(sb.has_shift(), tier == Tier::Complex);
                    assert_eq!(sb.payload_key(), t.payload_key);
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let t = &builtin_templates()[2];
        assert_eq!(t.build(Tier::Complex, 11), t.build(Tier::Complex, 11));
        assert_ne!(t.build(Tier::Complex, 11), t.build(Tier::Complex, 12));
    }

    #[test]
    fn weekday_matches_time() {
        let sb = builtin_templates()[4].build(Tier::Complex, 3);
        let info = sb.intention_shifted_external_data.unwrap();
        assert_eq!(info.timestamp().unwrap().weekday(), info.day_of_week);
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<&str> = TEMPLATE_NAMES.to_vec();
        names.dedup();
        assert_eq!(names.len(), 6);
        for (t, n) in builtin_templates().iter().zip(TEMPLATE_NAMES) {
            assert_eq!(t.name, n);
        }
    }
}
