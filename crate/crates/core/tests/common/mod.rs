//! Fuzz generator and brute-force feature reference shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use tract_core::features::FeatureName;
use tract_core::{RawResponse, SampleSet, NUM_FEATURES};

pub type Q = Ratio<i128>;

const WORDS: &[&str] = &[
    "apples", "total", "count", "we", "then", "add", "subtract", "check", "the", "is", "of", "to",
    "maybe", "however", "perhaps", "might", "could", "seems", "hmm", "although", "so", "value",
    "result", "twelve", "x", "y2", "sum", "carry", "digit", "first", "next", "now",
];
const NAMES: &[&str] = &[
    "Alice", "Bob", "Paris", "Euler", "The", "However", "Now", "We", "Maybe", "Step", "X",
];
const HEDGES: &[&str] = &["however", "although", "maybe", "perhaps", "might", "could", "seems", "hmm"];
const ANSWERS: &[&str] = &["12", "7", "Paris", "x = 3", "42"];
const NOISE: &[&str] = &["---", "**", "ok", "* * *", "...", "1.", "==="];

/// Sample set plus the reasoning steps each response is built from.
/// Responses with no reasoning have an empty step list.
pub struct Fuzzed {
    pub set: SampleSet,
    pub bodies: Vec<Vec<String>>,
}

impl Fuzzed {
    pub fn nonempty_bodies(&self) -> Vec<Vec<String>> {
        self.bodies.iter().filter(|b| !b.is_empty()).cloned().collect()
    }
}

fn word<R: Rng>(rng: &mut R) -> String {
    let base = if rng.gen_bool(0.2) {
        NAMES.choose(rng).unwrap().to_string()
    } else {
        WORDS.choose(rng).unwrap().to_string()
    };
    match rng.gen_range(0..12) {
        0 => base + "?",
        1 => base + ":",
        2 => base + ".",
        3 => base + ",",
        _ => base,
    }
}

/// One step: 2 to `max_words` words, optionally split over two lines.
fn step<R: Rng>(rng: &mut R, max_words: usize, allow_newline: bool) -> String {
    loop {
        let n = rng.gen_range(2..=max_words);
        let mut s = String::new();
        for i in 0..n {
            if i > 0 {
                let nl = allow_newline && i == n / 2 && rng.gen_bool(0.1);
                s.push(if nl { '\n' } else { ' ' });
            }
            s.push_str(&word(rng));
        }
        if s.chars().count() >= 5 {
            return s;
        }
    }
}

/// `line_start` permits the form whose marker must open a line.
fn announcement<R: Rng>(rng: &mut R, answer: &str, line_start: bool) -> String {
    match rng.gen_range(0..if line_start { 4 } else { 3 }) {
        0 => format!("Final Answer: {answer}"),
        1 => format!("**Final Answer:** {answer}"),
        2 => format!("The answer is {answer}."),
        _ => format!("Answer: {answer}"),
    }
}

/// A random response with `t` reasoning steps (possibly zero).
fn response<R: Rng>(rng: &mut R, t: usize, max_words: usize) -> (String, Vec<String>) {
    let answer = ANSWERS.choose(rng).unwrap();
    let announce = t == 0 || rng.gen_bool(0.8);
    if t >= 2 && rng.gen_bool(0.2) {
        // numbered list without blank lines; the announcement is an item
        let steps: Vec<String> = (1..=t)
            .map(|i| format!("{i}. {}", step(rng, max_words, false)))
            .collect();
        let mut lines = steps.clone();
        if announce {
            lines.push(format!("{}. {}", t + 1, announcement(rng, answer, false)));
        }
        return (lines.join("\n"), steps);
    }
    let multi = t + usize::from(announce) >= 2;
    let steps: Vec<String> = (0..t).map(|_| step(rng, max_words, multi)).collect();
    let mut segments = steps.clone();
    if multi && rng.gen_bool(0.3) {
        let pos = rng.gen_range(0..=segments.len());
        segments.insert(pos, NOISE.choose(rng).unwrap().to_string());
    }
    if announce {
        let a = announcement(rng, answer, true);
        if t >= 1 && rng.gen_bool(0.15) {
            // a restated answer mid-trace is also an announcement
            let pos = rng.gen_range(0..segments.len());
            segments.insert(pos, a);
        } else {
            segments.push(a);
        }
    }
    let sep = if rng.gen_bool(0.2) { "\n\n\n" } else { "\n\n" };
    (segments.join(sep), steps)
}

pub struct FuzzParams {
    pub k: (usize, usize),
    pub t: (usize, usize),
    pub max_words: usize,
    pub empty_rate: f64,
}

impl Default for FuzzParams {
    fn default() -> Self {
        Self {
            k: (2, 10),
            t: (1, 12),
            max_words: 16,
            empty_rate: 0.05,
        }
    }
}

pub fn fuzz_set<R: Rng>(rng: &mut R, id: &str, p: &FuzzParams) -> Fuzzed {
    let k = rng.gen_range(p.k.0..=p.k.1);
    let mut responses = Vec::with_capacity(k);
    let mut bodies = Vec::with_capacity(k);
    for _ in 0..k {
        let t = if rng.gen_bool(p.empty_rate) {
            0
        } else {
            rng.gen_range(p.t.0..=p.t.1)
        };
        let (text, steps) = response(rng, t, p.max_words);
        responses.push(RawResponse::new(text));
        bodies.push(steps);
    }
    Fuzzed {
        set: SampleSet {
            prompt_id: id.to_string(),
            question: String::new(),
            ground_truth: ANSWERS.choose(rng).unwrap().to_string(),
            responses,
            label: rng.gen_bool(0.5),
        },
        bodies,
    }
}

/// A batch with both labels present.
pub fn fuzz_batch<R: Rng>(rng: &mut R, n: usize, p: &FuzzParams) -> Vec<Fuzzed> {
    let mut out: Vec<Fuzzed> = (0..n).map(|i| fuzz_set(rng, &format!("f{i:05}"), p)).collect();
    if n >= 2 {
        out[0].set.label = true;
        out[1].set.label = false;
    }
    out
}

// ---------------------------------------------------------------------------
// Reference features, transcribed formula by formula in exact arithmetic.

fn q(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

fn bare(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

fn stopwords() -> HashSet<String> {
    include_str!("../../data/stopwords.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// |s| with any-whitespace splitting.
fn w(step: &str) -> i128 {
    step.split_whitespace().count() as i128
}

fn qmarks(step: &str) -> i128 {
    step.matches('?').count() as i128
}

fn hedges(step: &str) -> i128 {
    step.split_whitespace()
        .filter(|t| HEDGES.contains(&bare(t).to_lowercase().as_str()))
        .count() as i128
}

fn unigrams(step: &str) -> HashSet<String> {
    step.split_whitespace()
        .flat_map(|t| t.split(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Capitalised tokens, skipping sentence-initial function words and the
/// words of the default answer markers.
fn entities(step: &str, stop: &HashSet<String>) -> HashSet<String> {
    const FORMATTING: [&str; 4] = ["final", "answer", "the", "is"];
    let mut out = HashSet::new();
    for line in step.lines() {
        let mut initial = true;
        for raw in line.split_whitespace() {
            // list markers like `3.` end a sentence without being words
            let tok = bare(raw);
            let starts_sentence = initial;
            initial = raw.ends_with(['.', '!', '?', ':']);
            if tok.is_empty() {
                initial = true;
                continue;
            }
            if !tok.chars().next().unwrap().is_uppercase() {
                continue;
            }
            let lower = tok.to_lowercase();
            if FORMATTING.contains(&lower.as_str()) || (starts_sentence && stop.contains(&lower)) {
                continue;
            }
            out.insert(tok.to_string());
        }
    }
    out
}

/// Least-squares slope by the normal equations.
fn slope(ys: &[Q], xs: &[Q]) -> Q {
    let n = Q::from_integer(ys.len() as i128);
    if ys.len() < 2 {
        return Q::zero();
    }
    let sx: Q = xs.iter().sum();
    let sy: Q = ys.iter().sum();
    let sxx: Q = xs.iter().map(|x| x * x).sum();
    let sxy: Q = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let den = n * sxx - sx * sx;
    if den.is_zero() {
        return Q::zero();
    }
    (n * sxy - sx * sy) / den
}

fn var3(a: i128, b: i128, c: i128) -> Q {
    let m = q(a + b + c, 3);
    let d = |v: i128| (Q::from_integer(v) - m) * (Q::from_integer(v) - m);
    (d(a) + d(b) + d(c)) / Q::from_integer(3)
}

fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> Q {
    if a.is_empty() && b.is_empty() {
        return Q::from_integer(1);
    }
    q(a.intersection(b).count() as i128, a.union(b).count() as i128)
}

/// Exact features of `traces` (each a non-empty list of steps) in
/// canonical order.
pub fn reference_features(traces: &[Vec<String>]) -> [Q; NUM_FEATURES] {
    let stop = stopwords();
    let kk = traces.len() as i128;
    let mut qr = Q::zero();
    let mut wps = Q::zero();
    let mut pf = Q::zero();
    let mut hs = Q::zero();
    let mut cf = Q::zero();
    let mut msw = Q::zero();
    let mut wvs = Q::zero();
    let mut er = Q::zero();
    let mut sc = 0i128;
    for steps in traces {
        let t = steps.len() as i128;
        let ws: Vec<i128> = steps.iter().map(|s| w(s)).collect();
        qr += q(steps.iter().map(|s| qmarks(s)).sum(), t);
        wps += q(ws.iter().sum(), t);
        if t >= 2 {
            let flat = (1..ws.len()).filter(|&i| ws[i] <= ws[i - 1]).count() as i128;
            pf += q(flat, t - 1);
            let h: Vec<Q> = steps.iter().map(|s| Q::from_integer(hedges(s))).collect();
            let x: Vec<Q> = (1..=t).map(|i| q(i, t)).collect();
            hs += slope(&h, &x);
        }
        cf += q(steps.iter().filter(|s| s.contains(':')).count() as i128, t);
        msw += Q::from_integer(*ws.iter().max().unwrap());
        sc = sc.max(t);
        if t >= 4 {
            let v: Vec<Q> = (3..=t as usize)
                .map(|i| var3(ws[i - 3], ws[i - 2], ws[i - 1]))
                .collect();
            let x: Vec<Q> = (3..=t).map(|i| q(i, t)).collect();
            wvs += slope(&v, &x);
        }
        let ents: Vec<HashSet<String>> = steps.iter().map(|s| entities(s, &stop)).collect();
        let rep = (1..ents.len())
            .filter(|&i| !ents[i].is_disjoint(&ents[i - 1]))
            .count() as i128;
        er += q(rep, t);
    }
    let mids: Vec<HashSet<String>> = traces
        .iter()
        .map(|s| unigrams(&s[(s.len() / 2).max(1) - 1]))
        .collect();
    let fins: Vec<HashSet<String>> = traces.iter().map(|s| unigrams(s.last().unwrap())).collect();
    let mut mid = Q::zero();
    let mut fin = Q::zero();
    let mut pairs = 0i128;
    for j in 0..traces.len() {
        for k in j + 1..traces.len() {
            mid += Q::from_integer(1) - jaccard(&mids[j], &mids[k]);
            fin += Q::from_integer(1) - jaccard(&fins[j], &fins[k]);
            pairs += 1;
        }
    }
    let kq = Q::from_integer(kk);
    let pq = Q::from_integer(pairs);
    let mut out = [Q::zero(); NUM_FEATURES];
    let vals = [
        (FeatureName::QuestionRate, qr / kq),
        (FeatureName::WordsPerStep, wps / kq),
        (FeatureName::PlateauFrac, pf / kq),
        (FeatureName::HedgeSlope, hs / kq),
        (FeatureName::ColonFrac, cf / kq),
        (FeatureName::MaxStepWc, msw / kq),
        (FeatureName::ScMax, Q::from_integer(sc)),
        (FeatureName::WcVarSlope, wvs / kq),
        (FeatureName::MidUnigramDiv, mid / pq),
        (FeatureName::FinalUnigramDiv, fin / pq),
        (FeatureName::EntityRepeat, er / kq),
    ];
    for (f, v) in vals {
        out[f.index()] = v;
    }
    out
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().expect("finite rational")
}
