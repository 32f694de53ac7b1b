//! Textual policy checkpoints.
//!
//! ```text
//! metaopt-ckpt v1
//! 156 64 64 124 124
//! -1.2345678901234567e-2
//! ...
//! ```
//!
//! Line 2 holds the layer widths followed by the action dimension. Every
//! following line holds one parameter with 17 significant digits, in the
//! order of [`PolicyParams::values`].

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::{Dense, PolicyParams};

pub const HEADER: &str = "metaopt-ckpt v1";

pub fn to_string(policy: &PolicyParams) -> String {
    let mut out = String::with_capacity(24 * policy.num_params() + 64);
    out.push_str(HEADER);
    out.push('\n');
    let dims: Vec<String> = policy.dims().iter().map(|d| d.to_string()).collect();
    out.push_str(&dims.join(" "));
    out.push(' ');
    out.push_str(&policy.act_dim().to_string());
    out.push('\n');
    for v in policy.values() {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

/// Writes the checkpoint through a temporary file and renames it into place.
pub fn save_checkpoint(policy: &PolicyParams, path: &Path) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(to_string(policy).as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, output_scale: f64) -> Result<PolicyParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path, output_scale)
}

/// Parses checkpoint text; `origin` names the source in errors.
pub fn parse(text: &str, origin: &Path, output_scale: f64) -> Result<PolicyParams> {
    let err = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header {HEADER:?}, got {h:?}"))),
        None => return Err(err(1, "empty checkpoint".into())),
    }
    let (_, dim_line) = lines.next().ok_or_else(|| err(2, "missing dimension line".into()))?;
    let nums: Vec<usize> = dim_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(2, format!("bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    if nums.len() < 3 || nums.contains(&0) {
        return Err(err(2, format!("need at least two layer widths and act_dim, got {nums:?}")));
    }
    let (dims, act_dim) = (&nums[..nums.len() - 1], nums[nums.len() - 1]);
    if act_dim != dims[dims.len() - 1] {
        return Err(err(2, format!("act_dim {act_dim} does not match output width {}", dims[dims.len() - 1])));
    }

    let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + act_dim;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 2;
    for (idx, line) in lines {
        last_line = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if values.len() == expected {
            return Err(err(idx + 1, format!("unexpected extra value {t:?}")));
        }
        let v: f64 = t.parse().map_err(|_| err(idx + 1, format!("non-numeric token {t:?}")))?;
        if !v.is_finite() {
            return Err(err(idx + 1, format!("non-finite value {t:?}")));
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(err(
            last_line,
            format!("truncated checkpoint: expected {expected} values, found {}", values.len()),
        ));
    }

    let mut it = values.into_iter();
    let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
    let layers = dims
        .windows(2)
        .map(|w| {
            let weights = take(w[0] * w[1]);
            let bias = take(w[1]);
            Dense {
                n_in: w[0],
                n_out: w[1],
                weights,
                bias,
            }
        })
        .collect();
    let log_std = take(act_dim);
    PolicyParams::from_parts(layers, log_std, output_scale).map_err(|e| err(2, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamKey;

    #[test]
    fn round_trip_is_bitwise() {
        let p = PolicyParams::init(&[7, 5, 4], -2.5, 0.1, &mut StreamKey::new(4).rng()).unwrap();
        let q = parse(&to_string(&p), Path::new("mem"), 0.1).unwrap();
        assert_eq!(p, q);
        for (a, b) in p.values().zip(q.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn hand_written_file() {
        let text = "metaopt-ckpt v1\n1 1 1\n0.5\n-0.25\n-1.5\n";
        let p = parse(text, Path::new("mem"), 1.0).unwrap();
        assert_eq!(p.layers()[0].weights, vec![0.5]);
        assert_eq!(p.layers()[0].bias, vec![-0.25]);
        assert_eq!(p.action_log_std(), &[-1.5]);
    }

    #[test]
    fn malformed_inputs() {
        let line_of = |text: &str| match parse(text, Path::new("mem"), 1.0) {
            Err(Error::Format { line, .. }) => line,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(line_of("nope\n1 1 1\n"), 1);
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("metaopt-ckpt v1\n1 x 1\n"), 2);
        assert_eq!(line_of("metaopt-ckpt v1\n1 1 2\n"), 2);
        assert_eq!(line_of("metaopt-ckpt v1\n1 1 1\n0.5\nabc\n1\n"), 4);
        // truncated
        assert_eq!(line_of("metaopt-ckpt v1\n1 1 1\n0.5\n-0.25\n"), 4);
        assert_eq!(line_of("metaopt-ckpt v1\n1 1 1\n0.5\n-0.25\n1\n2\n"), 6);
    }
}
