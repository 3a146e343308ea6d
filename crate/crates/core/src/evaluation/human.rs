//! Crowd judgments: parsing, aggregation into distributions, and comparison
//! with model profiles.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::divergence::js_divergence;
use super::overlap::{above_threshold, class_overlap_prf, Prf};
use crate::error::{Error, Result};
use crate::profile::{GroupQuery, Profiler};

pub const NONE_OF_THE_ABOVE: &str = "NONE_OF_THE_ABOVE";
pub const CANNOT_DECIDE: &str = "CANNOT_DECIDE";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    /// Index into the profile's option list.
    Value(usize),
    NoneOfTheAbove,
    CannotDecide,
}

/// One incomplete profile shown to workers. The scored classes are the
/// options followed by a single lumped "outside the options" class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgedProfile {
    #[serde(default)]
    pub id: Option<String>,
    pub known: BTreeMap<String, String>,
    pub target: String,
    pub options: Vec<String>,
    pub judgments: Vec<String>,
}

impl JudgedProfile {
    pub fn class_count(&self) -> usize {
        self.options.len() + 1
    }

    pub fn choices(&self) -> Result<Vec<Choice>> {
        let mut seen = HashSet::new();
        if let Some(dup) = self.options.iter().find(|o| !seen.insert(o.as_str())) {
            return Err(Error::InvalidArgument(format!("option '{dup}' listed twice")));
        }
        self.judgments
            .iter()
            .map(|j| match j.as_str() {
                NONE_OF_THE_ABOVE => Ok(Choice::NoneOfTheAbove),
                CANNOT_DECIDE => Ok(Choice::CannotDecide),
                label => self
                    .options
                    .iter()
                    .position(|o| o == label)
                    .map(Choice::Value)
                    .ok_or_else(|| Error::InvalidArgument(format!("judgment '{label}' is not one of the options"))),
            })
            .collect()
    }

    pub fn human_distribution(&self) -> Result<Vec<f64>> {
        aggregate_judgments(&self.choices()?, self.class_count())
    }
}

/// Parse JSON lines, one profile per line; blank lines are skipped.
pub fn read_judgments<R: BufRead>(input: R) -> Result<Vec<JudgedProfile>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<judgments>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: JudgedProfile = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if p.judgments.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "profile has no judgments".into(),
            });
        }
        out.push(p);
    }
    Ok(out)
}

/// Turn votes into a distribution over `n_classes` classes, the last of
/// which is the outside class. NONE_OF_THE_ABOVE votes for the outside
/// class; CANNOT_DECIDE gives each class `1/n_classes` of a vote.
pub fn aggregate_judgments(choices: &[Choice], n_classes: usize) -> Result<Vec<f64>> {
    if choices.is_empty() {
        return Err(Error::InvalidArgument("no judgments to aggregate".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument("need at least one option plus the outside class".into()));
    }
    let mut votes = vec![0.0; n_classes];
    let share = 1.0 / n_classes as f64;
    for c in choices {
        match *c {
            Choice::Value(i) if i < n_classes - 1 => votes[i] += 1.0,
            Choice::Value(i) => {
                return Err(Error::InvalidArgument(format!("option index {i} out of range")))
            }
            Choice::NoneOfTheAbove => votes[n_classes - 1] += 1.0,
            Choice::CannotDecide => votes.iter_mut().for_each(|v| *v += share),
        }
    }
    let total: f64 = votes.iter().sum();
    Ok(votes.into_iter().map(|v| v / total).collect())
}

/// The model's mass on each option, with everything else lumped into the
/// outside class.
pub fn system_distribution(model: &dyn Profiler, profile: &JudgedProfile) -> Result<Vec<f64>> {
    let schema = model.schema();
    let query = GroupQuery::from_labels(schema, profile.known.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let target = schema.facet_index(&profile.target).ok_or_else(|| Error::UnknownFacet {
        facet: profile.target.clone(),
        valid: schema.names(),
    })?;
    if query.value_of(target).is_some() {
        return Err(Error::InvalidArgument(format!("target facet '{}' is also known", profile.target)));
    }
    let probs = model.predict_facet(&query, target)?;
    let mut out = Vec::with_capacity(profile.class_count());
    for o in &profile.options {
        let (_, v) = schema.resolve(&profile.target, o)?;
        out.push(probs[v as usize]);
    }
    let listed: f64 = out.iter().sum();
    out.push((1.0 - listed).max(0.0));
    let total: f64 = out.iter().sum();
    Ok(out.into_iter().map(|p| p / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub id: Option<String>,
    pub target: String,
    pub human: Vec<f64>,
    pub system: Vec<f64>,
    pub js_divergence: f64,
    pub overlap: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetHumanSummary {
    pub facet: String,
    pub profiles: usize,
    /// Mean of per-profile divergences.
    pub mean_js: f64,
    /// Divergence between the slot-wise averaged human and system distributions,
    /// when every profile of the facet has the same number of classes.
    pub js_of_means: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalReport {
    pub model: String,
    pub comparisons: Vec<ProfileComparison>,
    pub facets: Vec<FacetHumanSummary>,
    pub mean_js: f64,
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn slot_mean(ds: &[&Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; ds[0].len()];
    for d in ds {
        for (a, b) in m.iter_mut().zip(d.iter()) {
            *a += b / ds.len() as f64;
        }
    }
    m
}

pub fn human_eval(model: &dyn Profiler, profiles: &[JudgedProfile]) -> Result<HumanEvalReport> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("no judged profiles".into()));
    }
    let mut comparisons = Vec::with_capacity(profiles.len());
    for p in profiles {
        let human = p.human_distribution()?;
        let system = system_distribution(model, p)?;
        let threshold = 1.0 / p.class_count() as f64;
        comparisons.push(ProfileComparison {
            id: p.id.clone(),
            target: p.target.clone(),
            js_divergence: js_divergence(&human, &system)?,
            overlap: class_overlap_prf(&above_threshold(&system, threshold), &above_threshold(&human, threshold)),
            human,
            system,
        });
    }
    let mut by_facet: BTreeMap<&str, Vec<&ProfileComparison>> = BTreeMap::new();
    for c in &comparisons {
        by_facet.entry(c.target.as_str()).or_default().push(c);
    }
    let facets = by_facet
        .into_iter()
        .map(|(facet, cs)| {
            let same_width = cs.iter().all(|c| c.human.len() == cs[0].human.len());
            let js_of_means = if same_width {
                let h: Vec<&Vec<f64>> = cs.iter().map(|c| &c.human).collect();
                let s: Vec<&Vec<f64>> = cs.iter().map(|c| &c.system).collect();
                Some(js_divergence(&slot_mean(&h), &slot_mean(&s))?)
            } else {
                None
            };
            Ok(FacetHumanSummary {
                facet: facet.to_string(),
                profiles: cs.len(),
                mean_js: cs.iter().map(|c| c.js_divergence).sum::<f64>() / cs.len() as f64,
                js_of_means,
                mean_precision: mean_defined(cs.iter().map(|c| c.overlap.precision)),
                mean_recall: mean_defined(cs.iter().map(|c| c.overlap.recall)),
                mean_f1: mean_defined(cs.iter().map(|c| c.overlap.f1)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_js = comparisons.iter().map(|c| c.js_divergence).sum::<f64>() / comparisons.len() as f64;
    Ok(HumanEvalReport {
        model: model.kind().to_string(),
        comparisons,
        facets,
        mean_js,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unanimous_votes_give_point_mass() {
        let d = aggregate_judgments(&[Choice::Value(0); 15], 11).unwrap();
        assert_eq!(d[0], 1.0);
        assert!(d[1..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_cannot_decide_is_uniform() {
        let d = aggregate_judgments(&[Choice::CannotDecide], 11).unwrap();
        for x in d {
            assert_abs_diff_eq!(x, 1.0 / 11.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mixed_votes_match_hand_arithmetic() {
        let mut choices = vec![Choice::Value(0); 8];
        choices.extend([Choice::NoneOfTheAbove; 4]);
        choices.extend([Choice::CannotDecide; 3]);
        let d = aggregate_judgments(&choices, 11).unwrap();
        let spread = 3.0 / 11.0;
        assert_abs_diff_eq!(d[0], (8.0 + spread) / 15.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d[10], (4.0 + spread) / 15.0, epsilon = 1e-9);
        for x in &d[1..10] {
            assert_abs_diff_eq!(*x, spread / 15.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn order_does_not_matter() {
        let a = [Choice::Value(1), Choice::CannotDecide, Choice::NoneOfTheAbove, Choice::Value(1)];
        let mut b = a;
        b.reverse();
        assert_eq!(aggregate_judgments(&a, 4).unwrap(), aggregate_judgments(&b, 4).unwrap());
    }

    #[test]
    fn empty_is_an_error() {
        assert!(aggregate_judgments(&[], 11).is_err());
    }

    #[test]
    fn parses_jsonl() {
        let text = r#"{"known":{"a":"x"},"target":"b","options":["p","q"],"judgments":["p","CANNOT_DECIDE","NONE_OF_THE_ABOVE"]}

{"known":{},"target":"b","options":["p"],"judgments":["zzz"]}
"#;
        let ps = read_judgments(text.as_bytes()).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(
            ps[0].choices().unwrap(),
            vec![Choice::Value(0), Choice::CannotDecide, Choice::NoneOfTheAbove]
        );
        assert!(ps[1].choices().is_err());
    }
}
