use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    Category, EvaluationRecord, Group, GroupLabel, ImageLabelSet, LabelError, Party, Result,
    Variable,
};

#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn label(self) -> Result<Option<GroupLabel>> {
        if self.n == 0 {
            return Ok(None);
        }
        GroupLabel::from_aes(self.sum / self.n as f64, self.n).map(Some)
    }
}

/// Per image, per variable: AES over all eligible raters and over each party.
///
/// `Other` records are ignored. A group with no ratings for an image gets no
/// label at all. Output is sorted by `image_id`.
pub fn aggregate_image_labels(records: &[EvaluationRecord]) -> Result<Vec<ImageLabelSet>> {
    // image -> variable -> [all, dem, rep]
    let mut acc: BTreeMap<&str, [[Acc; 3]; 4]> = BTreeMap::new();
    for rec in records {
        let slot = match rec.party {
            Party::DemGroup => 1,
            Party::RepGroup => 2,
            Party::Other => continue,
        };
        let entry = acc.entry(rec.image_id.as_str()).or_default();
        for (k, v) in Variable::ALL.into_iter().enumerate() {
            let score = rec.ratings.get(v);
            entry[k][0].push(score);
            entry[k][slot].push(score);
        }
    }
    if acc.is_empty() {
        return Err(LabelError::NoEligibleRespondents);
    }

    acc.into_iter()
        .map(|(image_id, per_var)| {
            let mut set = ImageLabelSet::new(image_id);
            for (k, v) in Variable::ALL.into_iter().enumerate() {
                let labels = set.variable_mut(v);
                labels.all = per_var[k][0].label()?;
                labels.dem = per_var[k][1].label()?;
                labels.rep = per_var[k][2].label()?;
            }
            Ok(set)
        })
        .collect()
}

/// Images per category for one variable and group, indexed by `Category::index`.
pub fn category_counts(labelsets: &[ImageLabelSet], variable: Variable, group: Group) -> [usize; 3] {
    let mut counts = [0; 3];
    for set in labelsets {
        if let Some(l) = set.label(variable, group) {
            counts[l.category.index()] += 1;
        }
    }
    counts
}

/// Plain-text table of category counts by party for the two modelled variables.
pub fn render_category_table(labelsets: &[ImageLabelSet]) -> String {
    let vars = [Variable::Sentiment, Variable::SubjectOfHarm];
    let cols: Vec<[usize; 3]> = vars
        .iter()
        .flat_map(|&v| {
            [
                category_counts(labelsets, v, Group::Dem),
                category_counts(labelsets, v, Group::Rep),
            ]
        })
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "{:<10}{:<24}{}", "", vars[0].title(), vars[1].title());
    let _ = writeln!(
        out,
        "{:<10}{:>11} {:>11} {:>11} {:>11}",
        "", "Democrats", "Republicans", "Democrats", "Republicans"
    );
    for cat in Category::ALL {
        let i = cat.index();
        let _ = writeln!(
            out,
            "{:<10}{:>11} {:>11} {:>11} {:>11}",
            cat.title(),
            cols[0][i],
            cols[1][i],
            cols[2][i],
            cols[3][i]
        );
    }
    out
}
