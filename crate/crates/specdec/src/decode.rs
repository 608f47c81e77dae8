//! One round of speculative decoding, and seeded Monte Carlo over rounds.
//!
//! A round drafts `L` tokens from `Q`, verifies them left to right against
//! `P` with the configured acceptance rule, resamples the first rejected
//! position from the configured correction distribution, and appends a bonus
//! token from `P` when every draft survives. The round always emits
//! `tau + 1` tokens.
//!
//! RNG bookkeeping is fixed so runs are reproducible: drafting consumes one
//! uniform per draft token, verification consumes one uniform per examined
//! position, and exactly one further draw produces either the correction
//! token or the bonus token. Monte Carlo rounds each run on their own
//! counter-derived stream, so simulation results do not depend on the order
//! (or concurrency) in which rounds execute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::exact::ExactDist;
use crate::model::{ArModel, TokenId, TokenSeq};
use crate::prob;
use crate::rules::{Acceptance, AcceptanceRule, ResamplingRule};

/// Configuration of a speculative-decoding run.
#[derive(Debug, Clone)]
pub struct SdConfig {
    /// Number of draft tokens per round (`L`).
    pub draft_len: usize,
    pub acceptance: AcceptanceRule,
    pub resampling: ResamplingRule,
    pub seed: u64,
}

impl SdConfig {
    pub fn new(
        draft_len: usize,
        acceptance: AcceptanceRule,
        resampling: ResamplingRule,
        seed: u64,
    ) -> Self {
        Self {
            draft_len,
            acceptance,
            resampling,
            seed,
        }
    }

    /// Check the configuration against a concrete model pair. The bonus token
    /// needs one more conditional than the drafts, hence `L + 1 <= depth`.
    pub fn validate_for(&self, p: &ArModel, q: &ArModel) -> Result<()> {
        if self.draft_len == 0 {
            return Err(Error::InvalidParameter(
                "draft length must be at least 1".into(),
            ));
        }
        if p.vocab_size() != q.vocab_size() {
            return Err(Error::VocabMismatch {
                left: p.vocab_size(),
                right: q.vocab_size(),
            });
        }
        let depth = p.depth().min(q.depth());
        if self.draft_len + 1 > depth {
            return Err(Error::DepthExceeded {
                len: self.draft_len + 1,
                depth,
            });
        }
        if let AcceptanceRule::MultiplicativeRelax(s) = &self.acceptance {
            if s.len() != self.draft_len {
                return Err(Error::InvalidParameter(format!(
                    "schedule length {} does not match draft length {}",
                    s.len(),
                    self.draft_len
                )));
            }
        }
        Ok(())
    }
}

/// What one round produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    /// `tau`: how many draft tokens were accepted, in `0..=L`.
    pub accepted: usize,
    /// The emitted tokens; always `accepted + 1` of them (the extra one is
    /// the correction token, or the bonus token when everything passed).
    pub tokens: TokenSeq,
    /// True iff all `L` drafts were accepted.
    pub bonus_used: bool,
    /// 1-based position of the first rejection, absent when `tau = L`.
    pub rejected_at: Option<usize>,
}

/// Autoregressively sample `len` draft tokens from `Q`.
pub fn draft<R: Rng + ?Sized>(q: &ArModel, len: usize, rng: &mut R) -> Result<TokenSeq> {
    draft_at(q, &[], len, rng)
}

pub(crate) fn draft_at<R: Rng + ?Sized>(
    q: &ArModel,
    root: &[TokenId],
    len: usize,
    rng: &mut R,
) -> Result<TokenSeq> {
    if root.len() + len > q.depth() {
        return Err(Error::DepthExceeded {
            len: root.len() + len,
            depth: q.depth(),
        });
    }
    let mut full = root.to_vec();
    for _ in 0..len {
        let t = q.sample_next(&full, rng)?;
        full.push(t);
    }
    Ok(full.split_off(root.len()))
}

/// Verify a drafted sequence with the rules in `cfg`.
pub fn verify<R: Rng + ?Sized>(
    p: &ArModel,
    q: &ArModel,
    drafts: &[TokenId],
    cfg: &SdConfig,
    rng: &mut R,
) -> Result<RoundOutcome> {
    if drafts.len() != cfg.draft_len {
        return Err(Error::InvalidParameter(format!(
            "expected {} drafts, got {}",
            cfg.draft_len,
            drafts.len()
        )));
    }
    verify_with(p, q, drafts, &cfg.acceptance, &cfg.resampling, rng)
}

/// Verify with explicit rules; the entry point for test hooks that are not
/// expressible as an [`AcceptanceRule`].
pub fn verify_with<R: Rng + ?Sized>(
    p: &ArModel,
    q: &ArModel,
    drafts: &[TokenId],
    acceptance: &dyn Acceptance,
    resampling: &ResamplingRule,
    rng: &mut R,
) -> Result<RoundOutcome> {
    verify_at(p, q, &[], drafts, acceptance, resampling, rng)
}

pub(crate) fn verify_at<R: Rng + ?Sized>(
    p: &ArModel,
    q: &ArModel,
    root: &[TokenId],
    drafts: &[TokenId],
    acceptance: &dyn Acceptance,
    resampling: &ResamplingRule,
    rng: &mut R,
) -> Result<RoundOutcome> {
    let l = drafts.len();
    if root.len() + l + 1 > p.depth().min(q.depth()) {
        return Err(Error::DepthExceeded {
            len: root.len() + l + 1,
            depth: p.depth().min(q.depth()),
        });
    }
    let mut accepted_prefix = root.to_vec();
    for (i, &token) in drafts.iter().enumerate() {
        let pos = i + 1;
        let f = acceptance.prob(p, q, &accepted_prefix, token, pos)?;
        let r: f64 = rng.random();
        if r < f {
            accepted_prefix.push(token);
            continue;
        }
        let g = resampling.dist(p, q, &accepted_prefix, pos, acceptance)?;
        let correction = TokenId(prob::sample_index(&g, rng) as u32);
        let mut tokens = accepted_prefix.split_off(root.len());
        tokens.push(correction);
        return Ok(RoundOutcome {
            accepted: i,
            tokens,
            bonus_used: false,
            rejected_at: Some(pos),
        });
    }
    let bonus = p.sample_next(&accepted_prefix, rng)?;
    let mut tokens = accepted_prefix.split_off(root.len());
    tokens.push(bonus);
    Ok(RoundOutcome {
        accepted: l,
        tokens,
        bonus_used: true,
        rejected_at: None,
    })
}

/// Aggregate statistics over repeated independent rounds.
#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub rounds: u64,
    /// Mean of `tau + 1` over rounds.
    pub mean_accepted_len: f64,
    /// Standard error of the mean (zero when all rounds agree).
    pub stderr_accepted_len: f64,
    /// Empirical distribution over length-`L+1` sequences after virtually
    /// extending each round's output with draws from `P`.
    pub empirical: ExactDist,
    /// Acceptance rate at each draft position, conditional on the position
    /// being examined.
    pub per_position_accept_rate: Vec<f64>,
}

/// Run `n_rounds` independent rounds and summarize.
///
/// Round `i` draws from the stream `i` of a generator seeded with
/// `cfg.seed`, so the summary is a pure function of the arguments.
pub fn simulate(p: &ArModel, q: &ArModel, cfg: &SdConfig, n_rounds: u64) -> Result<SimulationSummary> {
    Ok(simulate_impl(p, q, cfg, n_rounds, |_, _| ())?)
}

/// Like [`simulate`], additionally returning every round's outcome in order.
pub fn simulate_detailed(
    p: &ArModel,
    q: &ArModel,
    cfg: &SdConfig,
    n_rounds: u64,
) -> Result<(SimulationSummary, Vec<RoundOutcome>)> {
    let mut rounds = Vec::with_capacity(n_rounds as usize);
    let summary = simulate_impl(p, q, cfg, n_rounds, |_, outcome: &RoundOutcome| {
        rounds.push(outcome.clone())
    })?;
    Ok((summary, rounds))
}

fn simulate_impl<F: FnMut(u64, &RoundOutcome)>(
    p: &ArModel,
    q: &ArModel,
    cfg: &SdConfig,
    n_rounds: u64,
    mut observe: F,
) -> Result<SimulationSummary> {
    if n_rounds == 0 {
        return Err(Error::InvalidParameter("n_rounds must be at least 1".into()));
    }
    cfg.validate_for(p, q)?;
    let l = cfg.draft_len;
    let v = p.vocab_size();
    let mut counts = vec![0u64; v.pow(l as u32 + 1)];
    let mut sum_len = 0u64;
    let mut sum_len_sq = 0u64;
    let mut examined = vec![0u64; l];
    let mut accepted = vec![0u64; l];

    for round in 0..n_rounds {
        let mut rng = round_rng(cfg.seed, round);
        let drafts = draft_at(q, &[], l, &mut rng)?;
        let out = verify_at(p, q, &[], &drafts, &cfg.acceptance, &cfg.resampling, &mut rng)?;

        let reach = out.rejected_at.unwrap_or(l);
        for pos in 1..=reach {
            examined[pos - 1] += 1;
        }
        for pos in 1..=out.accepted {
            accepted[pos - 1] += 1;
        }
        let len = (out.accepted + 1) as u64;
        sum_len += len;
        sum_len_sq += len * len;

        // Virtual extension: pad to L+1 tokens with draws from the target so
        // rounds of different lengths land in one comparable distribution.
        let mut seq = out.tokens.clone();
        while seq.len() < l + 1 {
            let t = p.sample_next(&seq, &mut rng)?;
            seq.push(t);
        }
        counts[prob::seq_index(&seq, v)] += 1;

        observe(round, &out);
    }

    let n = n_rounds as f64;
    let mean = sum_len as f64 / n;
    let stderr = if n_rounds > 1 {
        let var = (sum_len_sq as f64 - n * mean * mean) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    } else {
        0.0
    };
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let empirical = ExactDist::new(l + 1, v, probs)?;
    let per_position_accept_rate = examined
        .iter()
        .zip(&accepted)
        .map(|(&e, &a)| if e == 0 { 0.0 } else { a as f64 / e as f64 })
        .collect();

    Ok(SimulationSummary {
        rounds: n_rounds,
        mean_accepted_len: mean,
        stderr_accepted_len: stderr,
        empirical,
        per_position_accept_rate,
    })
}

fn round_rng(seed: u64, round: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(round);
    rng
}

/// Chain rounds to emit a sequence of exactly `total_len` tokens, re-rooting
/// the models on the emitted prefix after each round. Rounds near the depth
/// limit shrink their draft length so the bonus conditional always exists.
pub fn generate_sequence(
    p: &ArModel,
    q: &ArModel,
    cfg: &SdConfig,
    total_len: usize,
) -> Result<TokenSeq> {
    cfg.validate_for(p, q)?;
    let depth = p.depth().min(q.depth());
    if total_len > depth {
        return Err(Error::DepthExceeded {
            len: total_len,
            depth,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut out: TokenSeq = Vec::with_capacity(total_len);
    while out.len() < total_len {
        let room = depth - out.len();
        let l = cfg.draft_len.min(room - 1);
        if l == 0 {
            let t = p.sample_next(&out, &mut rng)?;
            out.push(t);
            continue;
        }
        let drafts = draft_at(q, &out, l, &mut rng)?;
        let round = verify_at(p, q, &out, &drafts, &cfg.acceptance, &cfg.resampling, &mut rng)?;
        out.extend(round.tokens);
    }
    out.truncate(total_len);
    Ok(out)
}
