//! Path scoring, answer selection, the non-verifier baselines, and
//! strict-match evaluation.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::answer::AnswerKey;
use crate::error::{Error, Result};
use crate::model::VerifierModel;
use crate::types::QuestionInstance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub path_index: usize,
    pub p_pos: f64,
    pub p_neg: f64,
    /// `(p_pos + (1 - p_neg)) / 2`
    pub score: f64,
}

impl PathScore {
    pub fn new(path_index: usize, p_pos: f64, p_neg: f64) -> Self {
        PathScore {
            path_index,
            p_pos,
            p_neg,
            score: 0.5 * (p_pos + (1.0 - p_neg)),
        }
    }
}

/// How scores inside one answer group are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Max,
    Sum,
}

/// Every selection rule the crate implements, as reported in results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VerifierMax,
    VerifierSum,
    Voting,
    CotMax,
    CotSum,
    Greedy,
}

impl Method {
    pub fn verifier(strategy: Strategy) -> Self {
        match strategy {
            Strategy::Max => Method::VerifierMax,
            Strategy::Sum => Method::VerifierSum,
        }
    }

    pub fn cot(strategy: Strategy) -> Self {
        match strategy {
            Strategy::Max => Method::CotMax,
            Strategy::Sum => Method::CotSum,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::VerifierMax => "verifier_max",
            Method::VerifierSum => "verifier_sum",
            Method::Voting => "voting",
            Method::CotMax => "cot_max",
            Method::CotSum => "cot_sum",
            Method::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub answer: AnswerKey,
    pub size: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub question_id: String,
    pub chosen_answer: AnswerKey,
    /// One entry per answer group, in the instance's group order.
    pub group_scores: Vec<GroupScore>,
    pub method: Method,
    /// Empty for selection rules that do not use the verifier.
    pub per_path: Vec<PathScore>,
}

/// Score every path of a (normalized) instance with the verifier.
pub fn score_paths(model: &VerifierModel, instance: &QuestionInstance) -> Result<Vec<PathScore>> {
    if instance.dim() != model.input_dim() {
        return Err(Error::DimMismatch {
            expected: model.input_dim(),
            actual: instance.dim(),
        });
    }
    instance
        .pairs()
        .iter()
        .map(|p| Ok(PathScore::new(p.path_index, model.predict(&p.pos)?, model.predict(&p.neg)?)))
        .collect()
}

fn combine(values: impl Iterator<Item = f64>, strategy: Strategy) -> f64 {
    match strategy {
        Strategy::Max => values.fold(f64::NEG_INFINITY, f64::max),
        // Ascending order makes the float sum independent of path order.
        Strategy::Sum => {
            let mut v: Vec<f64> = values.collect();
            v.sort_by(f64::total_cmp);
            v.into_iter().sum()
        }
    }
}

/// Ranking of group `a` against `b`: answered groups beat `NoAnswer`, then
/// higher score, then larger group, then the lexicographically smaller key.
fn rank(a: &GroupScore, b: &GroupScore) -> Ordering {
    (!a.answer.is_no_answer())
        .cmp(&!b.answer.is_no_answer())
        .then(a.score.total_cmp(&b.score))
        .then(a.size.cmp(&b.size))
        .then(b.answer.cmp(&a.answer))
}

fn pick(instance: &QuestionInstance, scores: Vec<f64>, method: Method, per_path: Vec<PathScore>) -> SelectionResult {
    let group_scores: Vec<GroupScore> = instance
        .groups()
        .iter()
        .zip(scores)
        .map(|(g, score)| GroupScore {
            answer: g.answer.clone(),
            size: g.members.len(),
            score,
        })
        .collect();
    let mut best = &group_scores[0];
    for g in &group_scores[1..] {
        if rank(g, best) == Ordering::Greater {
            best = g;
        }
    }
    SelectionResult {
        question_id: instance.question_id().to_string(),
        chosen_answer: best.answer.clone(),
        group_scores,
        method,
        per_path,
    }
}

/// Pick the answer group with the highest max- or sum-aggregated path score.
pub fn select_answer(scores: &[PathScore], instance: &QuestionInstance, strategy: Strategy) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let n = instance.num_paths();
    let mut by_path = vec![None; n];
    for s in scores {
        if s.path_index < n {
            by_path[s.path_index] = Some(s.score);
        }
    }
    let by_path: Vec<f64> = by_path.into_iter().collect::<Option<_>>().ok_or(Error::ScoreCoverage {
        expected: n,
        actual: scores.len(),
    })?;
    let g = instance
        .groups()
        .iter()
        .map(|grp| combine(grp.members.iter().map(|&i| by_path[i]), strategy))
        .collect();
    Ok(pick(instance, g, Method::verifier(strategy), scores.to_vec()))
}

/// Self-consistency baseline: group score is the group size.
pub fn majority_vote(instance: &QuestionInstance) -> SelectionResult {
    let g = instance.groups().iter().map(|grp| grp.members.len() as f64).collect();
    pick(instance, g, Method::Voting, Vec::new())
}

/// CoT-decoding baseline: aggregate per-path answer confidences.
pub fn cot_decoding_select(instance: &QuestionInstance, strategy: Strategy) -> Result<SelectionResult> {
    let conf: Vec<f64> = instance
        .pairs()
        .iter()
        .map(|p| p.answer_confidence)
        .collect::<Option<_>>()
        .ok_or_else(|| Error::MissingConfidence(instance.question_id().to_string()))?;
    let g = instance
        .groups()
        .iter()
        .map(|grp| combine(grp.members.iter().map(|&i| conf[i]), strategy))
        .collect();
    Ok(pick(instance, g, Method::cot(strategy), Vec::new()))
}

/// Greedy baseline: the answer of branch 0 (the top-1 first-token branch).
pub fn greedy_select(instance: &QuestionInstance) -> SelectionResult {
    let g = instance
        .groups()
        .iter()
        .map(|grp| if grp.members.contains(&0) { 1.0 } else { 0.0 })
        .collect();
    let mut r = pick(instance, g, Method::Greedy, Vec::new());
    r.chosen_answer = instance.pairs()[0].answer.clone();
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub questions: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Fraction of questions whose gold answer appears in any group.
    pub p_at_n: f64,
}

/// Strict-match accuracy over `(result, normalized gold answer)` pairs.
pub fn evaluate(results: &[(SelectionResult, String)]) -> Metrics {
    let questions = results.len();
    let correct = results.iter().filter(|(r, gold)| is_correct(r, gold)).count();
    let hits = results
        .iter()
        .filter(|(r, gold)| r.group_scores.iter().any(|g| g.answer.as_str() == Some(gold.as_str())))
        .count();
    let frac = |k: usize| if questions == 0 { 0.0 } else { k as f64 / questions as f64 };
    Metrics {
        questions,
        correct,
        accuracy: frac(correct),
        p_at_n: frac(hits),
    }
}

pub fn is_correct(result: &SelectionResult, gold: &str) -> bool {
    result.chosen_answer.as_str() == Some(gold)
}

/// One line of the per-question prediction log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub strategy: Method,
    pub chosen_answer: AnswerKey,
    pub group_scores: Vec<(AnswerKey, f64)>,
    pub correct: Option<bool>,
}

impl PredictionRecord {
    pub fn new(result: &SelectionResult, gold: Option<&str>) -> Self {
        PredictionRecord {
            question_id: result.question_id.clone(),
            strategy: result.method,
            chosen_answer: result.chosen_answer.clone(),
            group_scores: result.group_scores.iter().map(|g| (g.answer.clone(), g.score)).collect(),
            correct: gold.map(|g| is_correct(result, g)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{group_by_answer, AssertionPair, FeatureVector};

    fn instance(answers: &[Option<&str>], conf: Option<&[f64]>) -> QuestionInstance {
        let pairs = answers
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let f = FeatureVector::new(vec![i as f32]).unwrap();
                let key = a.map_or(AnswerKey::NoAnswer, |s| AnswerKey::Answer(s.to_string()));
                let p = AssertionPair::new("q", i, f.clone(), f, key).unwrap();
                match conf {
                    Some(c) => p.with_confidence(c[i]).unwrap(),
                    None => p,
                }
            })
            .collect();
        group_by_answer(pairs).unwrap()
    }

    fn scores(s: &[f64]) -> Vec<PathScore> {
        // p_neg = 1 - p_pos so the score equals p_pos.
        s.iter().enumerate().map(|(i, &v)| PathScore::new(i, v, 1.0 - v)).collect()
    }

    fn key(s: &str) -> AnswerKey {
        AnswerKey::Answer(s.to_string())
    }

    #[test]
    fn path_score_formula() {
        assert_eq!(PathScore::new(0, 0.5, 0.5).score, 0.5);
        assert!((PathScore::new(0, 0.8, 0.3).score - 0.75).abs() < 1e-15);
        assert!(PathScore::new(0, 1.0 - 1e-9, 1e-9).score > 1.0 - 1e-8);
    }

    #[test]
    fn max_and_sum_disagree() {
        let inst = instance(&[Some("5"), Some("3"), Some("5")], None);
        let s = scores(&[0.6, 0.9, 0.7]);
        let max = select_answer(&s, &inst, Strategy::Max).unwrap();
        let sum = select_answer(&s, &inst, Strategy::Sum).unwrap();
        assert_eq!(max.chosen_answer, key("3"));
        assert_eq!(sum.chosen_answer, key("5"));
        assert!((sum.group_scores[1].score - 1.3).abs() < 1e-12);
    }

    #[test]
    fn single_group_wins_both() {
        let inst = instance(&[Some("a"), Some("a")], None);
        for st in [Strategy::Max, Strategy::Sum] {
            assert_eq!(select_answer(&scores(&[0.1, 0.2]), &inst, st).unwrap().chosen_answer, key("a"));
        }
    }

    #[test]
    fn constant_scores_sum_prefers_larger_group() {
        let inst = instance(&[Some("x"), Some("y"), Some("x")], None);
        let r = select_answer(&scores(&[0.5, 0.5, 0.5]), &inst, Strategy::Sum).unwrap();
        assert_eq!(r.chosen_answer, key("x"));
        // Max ties on score, then size decides.
        let r = select_answer(&scores(&[0.5, 0.5, 0.5]), &inst, Strategy::Max).unwrap();
        assert_eq!(r.chosen_answer, key("x"));
    }

    #[test]
    fn no_answer_never_wins_against_answers() {
        let inst = instance(&[None, Some("4")], None);
        let r = select_answer(&scores(&[0.99, 0.01]), &inst, Strategy::Max).unwrap();
        assert_eq!(r.chosen_answer, key("4"));

        let all_none = instance(&[None, None], None);
        let r = select_answer(&scores(&[0.2, 0.9]), &all_none, Strategy::Sum).unwrap();
        assert_eq!(r.chosen_answer, AnswerKey::NoAnswer);
    }

    #[test]
    fn selection_errors() {
        let inst = instance(&[Some("a"), Some("b")], None);
        assert!(matches!(select_answer(&[], &inst, Strategy::Max), Err(Error::EmptyScores)));
        assert!(matches!(
            select_answer(&scores(&[0.3]), &inst, Strategy::Max),
            Err(Error::ScoreCoverage { .. })
        ));
    }

    #[test]
    fn voting() {
        let inst = instance(&[Some("b"), Some("b"), Some("b"), Some("a")], None);
        assert_eq!(majority_vote(&inst).chosen_answer, key("b"));
        let tie = instance(&[Some("b"), Some("a"), Some("b"), Some("a")], None);
        assert_eq!(majority_vote(&tie).chosen_answer, key("a"));
    }

    #[test]
    fn cot_decoding() {
        let inst = instance(&[Some("p"), Some("q")], Some(&[0.9, 0.1]));
        for st in [Strategy::Max, Strategy::Sum] {
            assert_eq!(cot_decoding_select(&inst, st).unwrap().chosen_answer, key("p"));
        }
        let eq = instance(&[Some("z"), Some("y"), Some("z")], Some(&[0.3, 0.3, 0.3]));
        assert_eq!(cot_decoding_select(&eq, Strategy::Sum).unwrap().chosen_answer, key("z"));

        let inst = instance(&[Some("a"), Some("b"), Some("a")], Some(&[0.4, 0.5, 0.3]));
        assert_eq!(cot_decoding_select(&inst, Strategy::Max).unwrap().chosen_answer, key("b"));
        assert_eq!(cot_decoding_select(&inst, Strategy::Sum).unwrap().chosen_answer, key("a"));

        let missing = instance(&[Some("a")], None);
        assert!(matches!(
            cot_decoding_select(&missing, Strategy::Max),
            Err(Error::MissingConfidence(_))
        ));
    }

    #[test]
    fn greedy_takes_branch_zero() {
        let inst = instance(&[Some("z"), Some("a"), Some("a")], None);
        assert_eq!(greedy_select(&inst).chosen_answer, key("z"));
        let none_first = instance(&[None, Some("a")], None);
        assert_eq!(greedy_select(&none_first).chosen_answer, AnswerKey::NoAnswer);
    }

    #[test]
    fn evaluation_counts() {
        let a = instance(&[Some("1"), Some("2")], None);
        let r = majority_vote(&a); // "1" by lexicographic tie-break
        let all = evaluate(&[(r.clone(), "1".into()), (r.clone(), "1".into())]);
        assert_eq!(all.accuracy, 1.0);
        let none = evaluate(&[(r.clone(), "3".into())]);
        assert_eq!(none.accuracy, 0.0);
        assert_eq!(none.p_at_n, 0.0);
        let half = evaluate(&[
            (r.clone(), "1".into()),
            (r.clone(), "2".into()),
            (r.clone(), "1".into()),
            (r.clone(), "7".into()),
        ]);
        assert_eq!(half.accuracy, 0.5);
        assert_eq!(half.p_at_n, 0.75);
    }

    #[test]
    fn prediction_record_json() {
        let inst = instance(&[Some("5"), None], None);
        let rec = PredictionRecord::new(&majority_vote(&inst), Some("5"));
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            json,
            r#"{"question_id":"q","strategy":"voting","chosen_answer":"5","group_scores":[["5",1.0],[null,1.0]],"correct":true}"#
        );
    }
}
