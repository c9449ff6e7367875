//! Synthetic survey whose aggregation lands on a fixed per-party category
//! distribution over 816 images.
//!
//! The committed copy lives at `fixtures/survey_816.csv`; it is the byte
//! output of [`survey_csv`].

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Category, Group, Variable};

pub const N_IMAGES: usize = 816;
pub const RATERS_PER_GROUP: usize = 3;
const SEED: u64 = 20_170_816;

/// (negative, neutral, positive) image counts per variable and party.
pub const TARGET_COUNTS: [(Variable, Group, [usize; 3]); 4] = [
    (Variable::Sentiment, Group::Dem, [32, 701, 83]),
    (Variable::Sentiment, Group::Rep, [212, 547, 57]),
    (Variable::SubjectOfHarm, Group::Dem, [20, 493, 303]),
    (Variable::SubjectOfHarm, Group::Rep, [77, 630, 109]),
];

pub fn image_id(i: usize) -> String {
    format!("img_{:04}", i + 1)
}

fn shuffled_categories(counts: [usize; 3], rng: &mut ChaCha8Rng) -> Vec<Category> {
    let mut v: Vec<Category> = Category::ALL
        .into_iter()
        .zip(counts)
        .flat_map(|(c, n)| std::iter::repeat(c).take(n))
        .collect();
    v.shuffle(rng);
    v
}

/// Integer ratings whose mean bins to `cat`.
fn ratings_for(cat: Category, rng: &mut ChaCha8Rng) -> [u8; RATERS_PER_GROUP] {
    let (lo, hi) = match cat {
        Category::Negative => (1, 4),
        Category::Neutral => (2, 6),
        Category::Positive => (4, 7),
    };
    loop {
        let r: [u8; RATERS_PER_GROUP] = std::array::from_fn(|_| rng.gen_range(lo..=hi));
        let sum: u32 = r.iter().map(|&x| x as u32).sum();
        let ok = match cat {
            Category::Negative => sum <= 9,
            Category::Neutral => sum > 9 && sum < 15,
            Category::Positive => sum >= 15,
        };
        if ok {
            return r;
        }
    }
}

/// Respondent-level CSV (header included) for the 816-image fixture.
///
/// Each image gets three Democrat and three Republican raters; every eighth
/// image also gets an Independent row, which ingestion drops.
pub fn survey_csv() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let plan: Vec<Vec<Category>> = TARGET_COUNTS
        .iter()
        .map(|&(_, _, counts)| shuffled_categories(counts, &mut rng))
        .collect();

    let mut out = String::from(
        "respondent_id,party,image_id,sentiment,subject_of_harm,object_of_harm,accuracy\n",
    );
    let mut serial = [0usize; 3];
    let mut respondent = |slot: usize, prefix: &str| {
        // ten images per respondent
        let id = format!("{prefix}{:04}", serial[slot] / 10 + 1);
        serial[slot] += 1;
        id
    };
    for i in 0..N_IMAGES {
        let img = image_id(i);
        for (slot, party, sent_plan, harm_plan) in
            [(0, "Democrat", &plan[0], &plan[2]), (1, "Republican", &plan[1], &plan[3])]
        {
            let sent = ratings_for(sent_plan[i], &mut rng);
            let harm = ratings_for(harm_plan[i], &mut rng);
            for k in 0..RATERS_PER_GROUP {
                let obj = rng.gen_range(1..=7);
                let acc = rng.gen_range(1..=7);
                let rid = respondent(slot, if slot == 0 { "D" } else { "R" });
                let _ = writeln!(out, "{rid},{party},{img},{},{},{obj},{acc}", sent[k], harm[k]);
            }
        }
        if i % 8 == 0 {
            let rid = respondent(2, "I");
            let r: [u8; 4] = std::array::from_fn(|_| rng.gen_range(1..=7));
            let _ = writeln!(out, "{rid},Independent,{img},{},{},{},{}", r[0], r[1], r[2], r[3]);
        }
    }
    out
}
