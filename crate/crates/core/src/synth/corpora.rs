use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A program plus its data files, ready to write to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub program: String,
    /// File name to contents.
    pub files: BTreeMap<String, String>,
}

pub const PROGRAM_FILE: &str = "program.dr";

impl Corpus {
    /// Writes `program.dr` and the data files into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(PROGRAM_FILE), &self.program)?;
        for (name, text) in &self.files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

fn features<R: Rng>(rng: &mut R, dim: usize, sign: f64, signal: f64, noise: f64) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let mean = if i == 0 { sign * signal } else { 0.0 };
            let z: f64 = StandardNormal.sample(rng);
            mean + noise * z
        })
        .collect()
}

fn feature_line(out: &mut String, name: &str, x: &[f64]) {
    out.push_str(name);
    for v in x {
        let _ = write!(out, " {:.6}", v);
    }
    out.push('\n');
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebateConfig {
    pub threads: usize,
    /// Posts by each of the two debaters.
    pub posts_per_user: usize,
    pub dim: usize,
    /// Mean offset of the stance-bearing feature.
    pub post_signal: f64,
    pub user_signal: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub noise: f64,
}

impl Default for DebateConfig {
    fn default() -> Self {
        DebateConfig { threads: 200, posts_per_user: 5, dim: 3, post_signal: 0.5, user_signal: 0.5, noise: 1.0 }
    }
}

pub const DEBATE_PROGRAM: &str = "\
entity User features={dim}
entity Post features={dim}
predicate Author(Post, User)
predicate Replies(Post, Post)
predicate Pro(User)?
predicate Stance(Post)?
rule: Author(P, U) => Stance(P)
rule: Author(P, U) => Pro(U)
hardconstraint: Author(P, U) & Pro(U) => Stance(P)
hardconstraint: Author(P, U) & Stance(P) => Pro(U)
hardconstraint: Replies(P, Q) & Stance(Q) => ~Stance(P)
hardconstraint: Replies(P, Q) & ~Stance(Q) => Stance(P)
";

/// Two-party debates. Each thread has two users of opposite stance who
/// alternate posts, every post replying to the previous one. A post's
/// stance is its author's, so the labels satisfy author consistency and
/// respondent disagreement exactly. Each user and post carries a noisy
/// feature vector whose first coordinate leans toward the true stance.
pub fn debate_corpus<R: Rng>(rng: &mut R, cfg: &DebateConfig) -> Corpus {
    let (mut users, mut posts, mut author, mut replies, mut pro, mut stance) =
        (String::new(), String::new(), String::new(), String::new(), String::new(), String::new());
    for t in 0..cfg.threads {
        let first: bool = rng.random_bool(0.5);
        let sides = [first, !first];
        for (k, side) in sides.iter().enumerate() {
            let u = format!("t{}u{}", t, k);
            let sign = if *side { 1.0 } else { -1.0 };
            feature_line(&mut users, &u, &features(rng, cfg.dim, sign, cfg.user_signal, cfg.noise));
            let _ = writeln!(pro, "{}\t{}", u, *side as u8);
        }
        for i in 0..2 * cfg.posts_per_user {
            let k = i % 2;
            let p = format!("t{}p{}", t, i);
            let sign = if sides[k] { 1.0 } else { -1.0 };
            feature_line(&mut posts, &p, &features(rng, cfg.dim, sign, cfg.post_signal, cfg.noise));
            let _ = writeln!(author, "{}\tt{}u{}", p, t, k);
            let _ = writeln!(stance, "{}\t{}", p, sides[k] as u8);
            if i > 0 {
                let _ = writeln!(replies, "{}\tt{}p{}", p, t, i - 1);
            }
        }
    }
    let files = BTreeMap::from([
        ("User.feat".to_string(), users),
        ("Post.feat".to_string(), posts),
        ("Author.tsv".to_string(), author),
        ("Replies.tsv".to_string(), replies),
        ("Pro.tsv".to_string(), pro),
        ("Stance.tsv".to_string(), stance),
    ]);
    Corpus { program: DEBATE_PROGRAM.replace("{dim}", &cfg.dim.to_string()), files }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTaskConfig {
    pub users: usize,
    pub dim: usize,
    /// Features are a random linear image of `latent_dim` latent factors
    /// plus Gaussian noise. Only the first factor bears on the labels.
    pub latent_dim: usize,
    pub noise: f64,
    /// Task B fires above this value of the first factor.
    pub threshold_b: f64,
}

impl Default for TwoTaskConfig {
    fn default() -> Self {
        TwoTaskConfig { users: 600, dim: 128, latent_dim: 8, noise: 2.0, threshold_b: 0.5 }
    }
}

pub const TWO_TASK_PROGRAM: &str = "\
entity User features={dim}
predicate Member(User)
predicate TaskA(User)?
predicate TaskB(User)?
rule: Member(U) => TaskA(U)
rule: Member(U) => TaskB(U)
";

/// Two binary tasks over the same users, both thresholding the same latent
/// trait `z₀`, which is observed only through a noisy random projection
/// mixed with nuisance factors. Task A is `z₀ > 0`, task B is
/// `z₀ > threshold_b`.
pub fn two_task_corpus<R: Rng>(rng: &mut R, cfg: &TwoTaskConfig) -> Corpus {
    let projection: Vec<Vec<f64>> =
        (0..cfg.latent_dim).map(|_| (0..cfg.dim).map(|_| StandardNormal.sample(&mut *rng)).collect()).collect();
    let (mut feat, mut member, mut a, mut b) = (String::new(), String::new(), String::new(), String::new());
    for i in 0..cfg.users {
        let z: Vec<f64> = (0..cfg.latent_dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let x: Vec<f64> = (0..cfg.dim)
            .map(|j| {
                let clean: f64 = z.iter().zip(&projection).map(|(zk, row)| zk * row[j]).sum();
                let e: f64 = StandardNormal.sample(&mut *rng);
                clean + cfg.noise * e
            })
            .collect();
        let u = format!("u{}", i);
        feature_line(&mut feat, &u, &x);
        let _ = writeln!(member, "{}", u);
        let _ = writeln!(a, "{}\t{}", u, (z[0] > 0.0) as u8);
        let _ = writeln!(b, "{}\t{}", u, (z[0] > cfg.threshold_b) as u8);
    }
    let files = BTreeMap::from([
        ("User.feat".to_string(), feat),
        ("Member.tsv".to_string(), member),
        ("TaskA.tsv".to_string(), a),
        ("TaskB.tsv".to_string(), b),
    ]);
    Corpus { program: TWO_TASK_PROGRAM.replace("{dim}", &cfg.dim.to_string()), files }
}
