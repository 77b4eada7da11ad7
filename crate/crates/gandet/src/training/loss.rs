use crate::error::{Error, Result};
use crate::tensorcore::{Graph, Var};

/// Index of the positive partner under adjacent pairing: views of source
/// image i sit at slots 2i and 2i+1.
pub fn partner(k: usize) -> usize {
    k ^ 1
}

/// Normalized temperature-scaled cross entropy over 2N adjacent-paired
/// embeddings. For each anchor u with partner u+:
///
///   l(u) = -sim(u, u+)/tau + ln( sum over v != u of exp(sim(u, v)/tau) )
///
/// where sim is cosine similarity; the result is the mean over all 2N
/// anchors. Each unordered pair's similarity is computed once and reused
/// in both directions.
pub fn nt_xent_loss(g: &mut Graph, embeddings: &[Var], tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!(
            "nt_xent_loss: temperature must be positive, got {tau}"
        )));
    }
    let n = embeddings.len();
    if n < 4 || n % 2 != 0 {
        return Err(Error::Contract(format!(
            "nt_xent_loss: need an even batch of at least 4 views, got {n}"
        )));
    }

    // upper-triangular similarity cache, scaled by 1/tau
    let mut scaled = vec![None; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = g.cos_sim(embeddings[i], embeddings[j])?;
            let s = g.scale(s, 1.0 / tau);
            scaled[i * n + j] = Some(s);
            scaled[j * n + i] = Some(s);
        }
    }
    let sim = |i: usize, j: usize| scaled[i * n + j].expect("off-diagonal similarity");

    let mut anchor_terms = Vec::with_capacity(n);
    for u in 0..n {
        let mut exps = Vec::with_capacity(n - 1);
        for v in 0..n {
            if v != u {
                let e = g.exp(sim(u, v));
                exps.push(e);
            }
        }
        let denom = g.sum_vars(&exps)?;
        let log_denom = g.ln(denom)?;
        let neg_pos = g.scale(sim(u, partner(u)), -1.0);
        anchor_terms.push(g.add(log_denom, neg_pos)?);
    }
    let total = g.sum_vars(&anchor_terms)?;
    Ok(g.scale(total, 1.0 / n as f64))
}

/// Mean binary cross entropy from logits; labels are 0 (real) or 1 (fake).
pub fn bce_loss(g: &mut Graph, logits: &[Var], labels: &[f64]) -> Result<Var> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::Contract(format!(
            "bce_loss: {} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let mut terms = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        terms.push(g.bce_with_logit(z, y)?);
    }
    let total = g.sum_vars(&terms)?;
    Ok(g.scale(total, 1.0 / terms.len() as f64))
}
