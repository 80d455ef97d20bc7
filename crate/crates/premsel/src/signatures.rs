//! Functor vocabulary, sparse signature vectors and per-functor context
//! distributions.
//!
//! The signature of a formula counts how often each vocabulary functor
//! occurs in it. The context distribution of functor `i` is the L1-normalized
//! sum of the signatures of every formula containing `i`; numerators are
//! accumulated in 64-bit integers so rows are exact up to the final division.

use std::collections::HashMap;

use thiserror::Error;

use crate::tptp::FunctorCounts;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("functor {symbol:?} is not in the vocabulary")]
    UnknownFunctor { symbol: String },
    #[error("functor index {index} occurs in no corpus signature")]
    NoContext { index: u32 },
}

/// Bijection between functor symbols and indices `0..n`, alphabetically
/// (byte-order) sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctorVocab {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl FunctorVocab {
    /// All distinct functor symbols across the corpus, sorted ascending.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a FunctorCounts>) -> Self {
        let mut symbols: Vec<String> = corpus
            .into_iter()
            .flat_map(|c| c.counts.keys())
            .cloned()
            .collect();
        symbols.sort_unstable();
        symbols.dedup();
        Self::from_sorted(symbols)
    }

    /// Wrap an already strictly sorted symbol list (e.g. read back from disk).
    pub fn from_sorted(symbols: Vec<String>) -> Self {
        debug_assert!(symbols.windows(2).all(|w| w[0] < w[1]));
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        FunctorVocab { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, index: u32) -> &str {
        &self.symbols[index as usize]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Sparse non-negative signature vector: `(vocabulary index, count)` pairs
/// with strictly increasing indices and counts of at least 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseSignature {
    entries: Vec<(u32, u32)>,
}

impl SparseSignature {
    /// Build from index/count pairs; sorts and asserts distinct indices.
    pub fn new(mut entries: Vec<(u32, u32)>) -> Self {
        entries.sort_unstable_by_key(|&(i, _)| i);
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|&(_, c)| c >= 1));
        SparseSignature { entries }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of all counts.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(i, c) in &self.entries {
            v[i as usize] = c as f64;
        }
        v
    }
}

/// Map functor counts onto vocabulary indices.
pub fn signature_of(
    counts: &FunctorCounts,
    vocab: &FunctorVocab,
) -> Result<SparseSignature, SignatureError> {
    let mut entries = Vec::with_capacity(counts.counts.len());
    for (symbol, &count) in &counts.counts {
        let index = vocab
            .index_of(symbol)
            .ok_or_else(|| SignatureError::UnknownFunctor {
                symbol: symbol.clone(),
            })?;
        entries.push((index, count));
    }
    // BTreeMap iteration is in symbol order, which the sorted vocabulary
    // maps monotonically onto indices.
    debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
    Ok(SparseSignature { entries })
}

/// Dense L1-normalized distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDistribution {
    pub probs: Vec<f64>,
}

impl ContextDistribution {
    pub fn l1_norm(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Context distribution of functor `index`: the normalized sum of the
/// signatures of every corpus formula whose signature contains `index`.
pub fn context_distribution(
    index: u32,
    corpus: &[SparseSignature],
    n: usize,
) -> Result<ContextDistribution, SignatureError> {
    let mut accum = vec![0u64; n];
    let mut seen = false;
    for sig in corpus {
        if sig
            .entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .is_ok()
        {
            seen = true;
            for &(i, c) in &sig.entries {
                accum[i as usize] += c as u64;
            }
        }
    }
    if !seen {
        return Err(SignatureError::NoContext { index });
    }
    Ok(normalize(&accum))
}

/// All context distributions in one corpus pass: each signature is
/// accumulated into the row of every functor it contains. Row `i` equals
/// `context_distribution(i, corpus, n)` exactly.
pub fn context_matrix(
    corpus: &[SparseSignature],
    n: usize,
) -> Result<Vec<ContextDistribution>, SignatureError> {
    let mut rows: Vec<HashMap<u32, u64>> = vec![HashMap::new(); n];
    for sig in corpus {
        for &(row_index, _) in &sig.entries {
            let row = &mut rows[row_index as usize];
            for &(i, c) in &sig.entries {
                *row.entry(i).or_insert(0) += c as u64;
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if row.is_empty() {
            return Err(SignatureError::NoContext { index: i as u32 });
        }
        let mut accum = vec![0u64; n];
        for (&j, &c) in row {
            accum[j as usize] = c;
        }
        out.push(normalize(&accum));
    }
    Ok(out)
}

fn normalize(accum: &[u64]) -> ContextDistribution {
    let total: u64 = accum.iter().sum();
    let total = total as f64;
    ContextDistribution {
        probs: accum.iter().map(|&c| c as f64 / total).collect(),
    }
}
