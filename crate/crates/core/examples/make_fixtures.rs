//! Regenerates the scripted-backend fixtures, vocabulary and micro datasets
//! under `fixtures/`.
//!
//! ```text
//! cargo run -p pag-core --example make_fixtures -- fixtures
//! ```

use std::fs;
use std::path::PathBuf;

use pag_core::backend::{classify_prompt, paraphrase_prompt, FixtureEntry};
use pag_core::{
    build_aggregation_prompt, CandidateSet, Label, LabelVocabulary, Prediction, PredictionSource, PromptStyle, Query,
    Sample,
};

const CLINC150: [&str; 150] = [
    // banking
    "transfer",
    "transactions",
    "balance",
    "freeze_account",
    "pay_bill",
    "bill_balance",
    "bill_due",
    "interest_rate",
    "routing",
    "min_payment",
    "order_checks",
    "pin_change",
    "report_fraud",
    "account_blocked",
    "spending_history",
    // credit cards
    "credit_score",
    "report_lost_card",
    "credit_limit",
    "rewards_balance",
    "new_card",
    "application_status",
    "card_declined",
    "international_fees",
    "apr",
    "redeem_rewards",
    "credit_limit_change",
    "damaged_card",
    "replacement_card_duration",
    "improve_credit_score",
    "expiration_date",
    // kitchen and dining
    "recipe",
    "restaurant_reviews",
    "calories",
    "nutrition_info",
    "restaurant_suggestion",
    "ingredients_list",
    "ingredient_substitution",
    "cook_time",
    "food_last",
    "meal_suggestion",
    "restaurant_reservation",
    "confirm_reservation",
    "how_busy",
    "cancel_reservation",
    "accept_reservations",
    // home
    "shopping_list",
    "shopping_list_update",
    "next_song",
    "play_music",
    "update_playlist",
    "todo_list",
    "todo_list_update",
    "calendar",
    "calendar_update",
    "what_song",
    "order",
    "order_status",
    "reminder",
    "reminder_update",
    "smart_home",
    // auto and commute
    "traffic",
    "directions",
    "gas",
    "gas_type",
    "distance",
    "current_location",
    "mpg",
    "oil_change_when",
    "oil_change_how",
    "jump_start",
    "uber",
    "schedule_maintenance",
    "last_maintenance",
    "tire_pressure",
    "tire_change",
    // travel
    "book_flight",
    "book_hotel",
    "car_rental",
    "travel_suggestion",
    "travel_alert",
    "travel_notification",
    "carry_on",
    "timezone",
    "vaccines",
    "translate",
    "flight_status",
    "international_visa",
    "lost_luggage",
    "plug_type",
    "exchange_rate",
    // utility
    "time",
    "alarm",
    "share_location",
    "find_phone",
    "weather",
    "text",
    "spelling",
    "make_call",
    "timer",
    "date",
    "calculator",
    "measurement_conversion",
    "flip_coin",
    "roll_dice",
    "definition",
    // work
    "direct_deposit",
    "pto_request",
    "taxes",
    "payday",
    "w2",
    "pto_balance",
    "pto_request_status",
    "next_holiday",
    "insurance",
    "insurance_change",
    "schedule_meeting",
    "pto_used",
    "meeting_schedule",
    "rollover_401k",
    "income",
    // small talk
    "greeting",
    "goodbye",
    "tell_joke",
    "where_are_you_from",
    "how_old_are_you",
    "what_is_your_name",
    "who_made_you",
    "thank_you",
    "what_can_i_ask_you",
    "what_are_your_hobbies",
    "do_you_have_pets",
    "are_you_a_bot",
    "meaning_of_life",
    "who_do_you_work_for",
    "fun_fact",
    // meta
    "change_ai_name",
    "change_user_name",
    "cancel",
    "user_name",
    "reset_settings",
    "whisper_mode",
    "repeat",
    "no",
    "yes",
    "maybe",
    "change_language",
    "change_accent",
    "change_volume",
    "change_speed",
    "sync_device",
];

/// A generation as `(text, per-token probabilities)`.
type Gen = (&'static str, &'static [f64]);

struct Case {
    text: &'static str,
    gold: &'static str,
    original: Gen,
    paraphrases: [(&'static str, Gen); 5],
    aggregator: Gen,
}

const CASES: &[Case] = &[
    Case {
        text: "what is the day off request status",
        gold: "pto_request_status",
        original: ("request_status", &[0.28]),
        paraphrases: [
            (
                "Can you provide me with the status of my day off request?",
                ("pto_request_status", &[0.98]),
            ),
            ("How is my day off request doing?", ("pto_request_status", &[0.86])),
            (
                "What is the current status of my day off request?",
                ("pto_request_status", &[0.98]),
            ),
            (
                "Could you let me know the status of my day off request?",
                ("pto_request_status", &[0.98]),
            ),
            (
                "What is the update on my day off request status?",
                ("pto_request_status", &[0.98]),
            ),
        ],
        aggregator: ("pto_request_status", &[0.99]),
    },
    Case {
        text: "what is the reason humans even exist",
        gold: "meaning_of_life",
        original: ("explain_meaning_of_life", &[0.11]),
        paraphrases: [
            ("What is the purpose of human existence?", ("meaning_of_life", &[0.32])),
            (
                "Why do humans exist in the world?",
                ("The meaning of life", &[0.25, 0.2]),
            ),
            ("What is the cause of human existence?", ("</s>", &[0.07])),
            (
                "What is the explanation for the existence of humans?",
                ("explain_life", &[0.21]),
            ),
            (
                "What is the rationale behind the existence of human beings?",
                ("rational_existence", &[0.08]),
            ),
        ],
        aggregator: ("meaning_of_life", &[0.985]),
    },
    Case {
        text: "what is my checking account balance",
        gold: "balance",
        original: ("balance", &[0.995]),
        paraphrases: [
            ("How much money is in my checking account?", ("balance", &[0.99])),
            ("What is the balance of my checking account?", ("balance", &[0.995])),
            ("Tell me my checking account balance.", ("balance", &[0.99])),
            ("How much do I have in checking?", ("balance", &[0.97])),
            ("Can you show my checking balance?", ("balance", &[0.99])),
        ],
        aggregator: ("balance", &[0.995]),
    },
    Case {
        text: "i need to change the pin on my card",
        gold: "pin_change",
        original: ("freeze_account", &[0.61]),
        paraphrases: [
            ("How do I change my card PIN?", ("pin_change", &[0.93])),
            ("I want to set a new PIN for my card.", ("pin_change", &[0.95])),
            ("Can you help me update my card's PIN?", ("pin_change", &[0.9])),
            ("Please change the PIN number on my card.", ("pin_change", &[0.97])),
            ("My card PIN needs to be changed.", ("freeze_account", &[0.5])),
        ],
        aggregator: ("pin_change", &[0.99]),
    },
    Case {
        text: "set an alarm for 7am",
        gold: "alarm",
        original: ("alarm", &[0.999]),
        paraphrases: [
            ("Wake me up at 7 in the morning.", ("alarm", &[0.98])),
            ("Please set an alarm for 7 a.m.", ("alarm", &[0.999])),
            ("Create a 7am alarm.", ("alarm", &[0.99])),
            ("I need an alarm at seven AM.", ("alarm", &[0.99])),
            ("Can you set my alarm to 7am?", ("alarm", &[0.999])),
        ],
        aggregator: ("alarm", &[0.999]),
    },
];

const OOD_CASES: &[Case] = &[
    Case {
        text: "how do i build a treehouse",
        gold: "__ood__",
        original: ("build_treehouse", &[0.12]),
        paraphrases: [
            ("What are the steps to build a treehouse?", ("diy_project", &[0.2])),
            ("How can I construct a treehouse?", ("construction", &[0.15])),
            ("What do I need to make a treehouse?", ("shopping_list", &[0.09])),
            (
                "Can you explain how to build a tree house?",
                ("build_treehouse", &[0.18]),
            ),
            (
                "Give me instructions for building a treehouse.",
                ("instructions", &[0.1]),
            ),
        ],
        aggregator: ("construction", &[0.3]),
    },
    Case {
        text: "what is the boiling point of mercury",
        gold: "__ood__",
        original: ("measurement_conversion", &[0.42]),
        paraphrases: [
            (
                "At what temperature does mercury boil?",
                ("measurement_conversion", &[0.45]),
            ),
            ("What temperature is mercury's boiling point?", ("definition", &[0.3])),
            (
                "How hot does mercury need to be to boil?",
                ("measurement_conversion", &[0.38]),
            ),
            (
                "Tell me the boiling temperature of mercury.",
                ("measurement_conversion", &[0.4]),
            ),
            ("Mercury boils at what temperature?", ("fun_fact", &[0.22])),
        ],
        aggregator: ("measurement_conversion", &[0.4]),
    },
];

fn sample((text, probs): Gen) -> Sample {
    Sample::new(text, probs.iter().map(|p| p.ln()).collect())
}

fn prediction((text, probs): Gen, source: PredictionSource, vocab: &LabelVocabulary) -> Prediction {
    Prediction {
        label: Label::resolve(text, vocab),
        confidence: probs.iter().map(|p| p.ln()).sum::<f64>().exp(),
        source,
        token_logprobs: probs.iter().map(|p| p.ln()).collect(),
    }
}

fn entries(case: &Case, vocab: &LabelVocabulary) -> Vec<FixtureEntry> {
    let entry = |prompt: String, gen: Gen| FixtureEntry {
        prompt,
        samples: vec![sample(gen)],
    };
    let numbered = case
        .paraphrases
        .iter()
        .enumerate()
        .map(|(i, (p, _))| format!("{}. {p}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let mut out = vec![
        entry(classify_prompt(case.text, vocab.name()), case.original),
        FixtureEntry {
            prompt: paraphrase_prompt(case.text, 5),
            samples: vec![Sample::new(numbered, vec![])],
        },
    ];
    for (text, gen) in &case.paraphrases {
        out.push(entry(classify_prompt(text, vocab.name()), *gen));
    }
    let candidates = CandidateSet::new(
        Query::new("0", case.text),
        prediction(case.original, PredictionSource::Original, vocab),
    )
    .with_paraphrases(
        case.paraphrases
            .iter()
            .enumerate()
            .map(|(i, (t, g))| {
                (
                    t.to_string(),
                    prediction(*g, PredictionSource::Paraphrase(i + 1), vocab),
                )
            })
            .collect(),
    );
    out.push(entry(
        build_aggregation_prompt(&candidates, PromptStyle::Compact),
        case.aggregator,
    ));
    out
}

fn jsonl<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    rows.into_iter()
        .map(|r| serde_json::to_string(&r).unwrap() + "\n")
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    fs::create_dir_all(&dir)?;
    let vocab = LabelVocabulary::new("clinc150", CLINC150)?;
    fs::write(dir.join("clinc150.txt"), CLINC150.join("\n") + "\n")?;

    let all: Vec<&Case> = CASES.iter().chain(OOD_CASES).collect();
    fs::write(
        dir.join("fixtures.jsonl"),
        jsonl(all.iter().flat_map(|c| entries(c, &vocab))),
    )?;
    fs::write(
        dir.join("worked_examples.jsonl"),
        jsonl(CASES[..2].iter().flat_map(|c| entries(c, &vocab))),
    )?;

    let row = |c: &Case, split: &str| serde_json::json!({"text": c.text, "label": c.gold, "split": split});
    let mut canonical: Vec<serde_json::Value> = CASES.iter().map(|c| row(c, "test")).collect();
    canonical.extend(all.iter().map(|c| row(c, "val")));
    fs::write(dir.join("micro.jsonl"), jsonl(canonical))?;

    let pairs = |cases: &[Case]| cases.iter().map(|c| (c.text, c.gold)).collect::<Vec<_>>();
    let split_keyed = serde_json::json!({
        "train": [],
        "val": pairs(CASES),
        "oos_val": pairs(OOD_CASES),
        "test": pairs(CASES),
    });
    fs::write(
        dir.join("micro.json"),
        serde_json::to_string_pretty(&split_keyed)? + "\n",
    )?;

    let config = serde_json::json!({
        "tau": 0.98,
        "n_paraphrases": 5,
        "aggregation": "llm",
        "max_parallel": 4,
        "vocabulary": "clinc150.txt",
        "backend": {"kind": "scripted", "fixtures": "fixtures.jsonl"},
    });
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    eprintln!("wrote fixtures to {}", dir.display());
    Ok(())
}
