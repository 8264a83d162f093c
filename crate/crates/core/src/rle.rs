//! Run-length encoding of label maps.
//!
//! Binary form: `u32` run count, then `(label: u32, length: u32)` pairs, all
//! little-endian.

/// `(label, length)` runs over `labels` in order.
pub fn encode_runs(labels: &[u32]) -> Vec<(u32, u32)> {
    let mut runs: Vec<(u32, u32)> = Vec::new();
    for &l in labels {
        match runs.last_mut() {
            Some((label, len)) if *label == l => *len += 1,
            _ => runs.push((l, 1)),
        }
    }
    runs
}

pub fn decode_runs(runs: &[(u32, u32)]) -> Vec<u32> {
    let total: usize = runs.iter().map(|&(_, n)| n as usize).sum();
    let mut out = Vec::with_capacity(total);
    for &(label, n) in runs {
        out.extend(std::iter::repeat_n(label, n as usize));
    }
    out
}

pub fn runs_to_bytes(runs: &[(u32, u32)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + runs.len() * 8);
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for &(label, n) in runs {
        out.extend_from_slice(&label.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
    }
    out
}

/// Parses the binary form; returns the runs and the number of bytes consumed.
pub fn runs_from_bytes(bytes: &[u8]) -> Option<(Vec<(u32, u32)>, usize)> {
    let count = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let end = 4 + count.checked_mul(8)?;
    let body = bytes.get(4..end)?;
    let runs = body
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                u32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    Some((runs, end))
}
