//! Architecture strings of the form `n,512,512,1024,dp(0.8),512,512,n`.
//!
//! `n` stands for the item count and is bound when a dataset is loaded. The
//! integers before `dp(p)` are encoder layer widths (the last one is the
//! coding layer); the integers after it are decoder hidden widths. Without a
//! `dp` token every integer belongs to the encoder and the drop probability
//! is zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub encoder_dims: Vec<usize>,
    /// `Some` iff the string carried a `dp(p)` token, so `dp(0)` survives a round trip.
    pub dropout: Option<f64>,
    pub decoder_dims: Vec<usize>,
    pub activation: Activation,
    pub tied: bool,
}

/// Layer widths with the encoder/decoder boundary resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `[n, e1, .., ek]`; `ek` is the coding width.
    pub encoder: Vec<usize>,
    /// `[ek, d1, .., n]`
    pub decoder: Vec<usize>,
}

impl Layout {
    pub fn n_encoder_layers(&self) -> usize {
        self.encoder.len() - 1
    }

    pub fn n_decoder_layers(&self) -> usize {
        self.decoder.len() - 1
    }

    /// `(in, out)` for every layer, encoder first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.encoder
            .windows(2)
            .chain(self.decoder.windows(2))
            .map(|w| (w[0], w[1]))
            .collect()
    }
}

impl ArchitectureSpec {
    pub fn new(encoder_dims: Vec<usize>, dropout: Option<f64>, decoder_dims: Vec<usize>) -> Result<Self> {
        let spec = ArchitectureSpec {
            encoder_dims,
            dropout,
            decoder_dims,
            activation: Activation::Selu,
            tied: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_tied(mut self, tied: bool) -> Self {
        self.tied = tied;
        self
    }

    /// Sets the coding-layer drop probability. When the spec had no `dp`
    /// token and no decoder widths, the hidden widths are split at the middle
    /// so the coding layer sits in the centre.
    pub fn with_dropout(mut self, drop_prob: f64) -> Self {
        if self.dropout.is_none() && self.decoder_dims.is_empty() && self.encoder_dims.len() > 1 {
            let mid = (self.encoder_dims.len() - 1) / 2;
            self.decoder_dims = self.encoder_dims.split_off(mid + 1);
        }
        self.dropout = Some(drop_prob);
        self
    }

    pub fn drop_prob(&self) -> f64 {
        self.dropout.unwrap_or(0.0)
    }

    pub fn coding_dim(&self) -> usize {
        *self.encoder_dims.last().expect("validated: encoder is non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.is_empty() {
            return Err(Error::Architecture {
                position: 1,
                message: "no coding layer".into(),
            });
        }
        if let Some(pos) = self.encoder_dims.iter().chain(&self.decoder_dims).position(|&d| d == 0) {
            return Err(Error::Architecture {
                position: pos + 1,
                message: "layer width must be positive".into(),
            });
        }
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Architecture {
                    position: self.encoder_dims.len() + 1,
                    message: format!("drop probability {p} outside [0, 1)"),
                });
            }
        }
        self.activation.validate()
    }

    /// Resolves layer widths against an item count.
    ///
    /// A tied model without a `dp` token needs a boundary to pair mirror
    /// layers; the hidden widths must then be a palindrome and the middle
    /// width is taken as the coding layer.
    pub fn layout(&self, n_items: usize) -> Result<Layout> {
        self.validate()?;
        if n_items == 0 {
            return Err(Error::InvalidArgument("item count must be positive".into()));
        }
        let (enc, dec): (Vec<usize>, Vec<usize>) =
            if self.tied && self.dropout.is_none() && self.decoder_dims.is_empty() {
                let hidden = &self.encoder_dims;
                let palindrome = hidden.iter().eq(hidden.iter().rev());
                if hidden.len().is_multiple_of(2) || !palindrome {
                    return Err(Error::Architecture {
                        position: 1,
                        message: "tied model without dp(p) needs symmetric hidden widths".into(),
                    });
                }
                let mid = hidden.len() / 2;
                (hidden[..=mid].to_vec(), hidden[mid + 1..].to_vec())
            } else {
                (self.encoder_dims.clone(), self.decoder_dims.clone())
            };
        if self.tied {
            let mirrored: Vec<usize> = enc[..enc.len() - 1].iter().rev().copied().collect();
            if mirrored != dec {
                return Err(Error::Architecture {
                    position: enc.len() + 1,
                    message: format!(
                        "tied weights need decoder widths {mirrored:?} mirroring the encoder, got {dec:?}"
                    ),
                });
            }
        }
        let mut encoder = Vec::with_capacity(enc.len() + 1);
        encoder.push(n_items);
        encoder.extend(&enc);
        let mut decoder = Vec::with_capacity(dec.len() + 2);
        decoder.push(*enc.last().unwrap());
        decoder.extend(&dec);
        decoder.push(n_items);
        Ok(Layout { encoder, decoder })
    }

    /// Trainable parameters for a given item count: weights plus one bias per layer,
    /// shared weights counted once.
    pub fn parameter_count(&self, n_items: usize) -> Result<usize> {
        let layout = self.layout(n_items)?;
        let shapes = layout.layer_shapes();
        let k = layout.n_encoder_layers();
        Ok(shapes
            .iter()
            .enumerate()
            .map(|(i, &(input, output))| {
                let weights = if self.tied && i >= k { 0 } else { input * output };
                weights + output
            })
            .sum())
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("n")?;
        for d in &self.encoder_dims {
            write!(f, ",{d}")?;
        }
        if let Some(p) = self.dropout {
            write!(f, ",dp({p})")?;
        }
        for d in &self.decoder_dims {
            write!(f, ",{d}")?;
        }
        f.write_str(",n")
    }
}

impl FromStr for ArchitectureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_architecture(s)
    }
}

fn arch_err(position: usize, message: impl Into<String>) -> Error {
    Error::Architecture {
        position,
        message: message.into(),
    }
}

/// Parses an architecture string; activation defaults to SELU, untied.
///
/// Error positions are zero-based token indices.
pub fn parse_architecture(s: &str) -> Result<ArchitectureSpec> {
    let tokens: Vec<&str> = s.split(',').map(str::trim).collect();
    if s.trim().is_empty() {
        return Err(arch_err(0, "empty architecture string"));
    }
    if tokens[0] != "n" {
        return Err(arch_err(0, format!("expected leading `n`, found {:?}", tokens[0])));
    }
    let last = tokens.len() - 1;
    if last == 0 {
        return Err(arch_err(0, "no coding layer"));
    }
    if tokens[last] != "n" {
        return Err(arch_err(
            last,
            format!("expected trailing `n`, found {:?}", tokens[last]),
        ));
    }

    let mut encoder = Vec::new();
    let mut decoder = Vec::new();
    let mut dropout: Option<(usize, f64)> = None;
    for (pos, tok) in tokens.iter().enumerate().take(last).skip(1) {
        if let Some(inner) = tok.strip_prefix("dp(").and_then(|t| t.strip_suffix(')')) {
            if dropout.is_some() {
                return Err(arch_err(pos, "more than one dp(p) token"));
            }
            let p: f64 = inner
                .trim()
                .parse()
                .map_err(|_| arch_err(pos, format!("bad drop probability {inner:?}")))?;
            if !(0.0..1.0).contains(&p) {
                return Err(arch_err(pos, format!("drop probability {p} outside [0, 1)")));
            }
            if encoder.is_empty() {
                return Err(arch_err(pos, "dp(p) before any encoder layer"));
            }
            if pos == last - 1 {
                return Err(arch_err(pos, "dp(p) leaves the decoder without hidden layers"));
            }
            dropout = Some((pos, p));
            continue;
        }
        let width: usize = tok
            .parse()
            .map_err(|_| arch_err(pos, format!("expected a layer width or dp(p), found {tok:?}")))?;
        if width == 0 {
            return Err(arch_err(pos, "layer width must be positive"));
        }
        if dropout.is_some() {
            decoder.push(width);
        } else {
            encoder.push(width);
        }
    }
    if encoder.is_empty() {
        return Err(arch_err(1, "no coding layer"));
    }
    Ok(ArchitectureSpec {
        encoder_dims: encoder,
        dropout: dropout.map(|(_, p)| p),
        decoder_dims: decoder,
        activation: Activation::Selu,
        tied: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_netflix_model() {
        let a = parse_architecture("n,512,512,1024,dp(0.8),512,512,n").unwrap();
        assert_eq!(a.encoder_dims, vec![512, 512, 1024]);
        assert_eq!(a.dropout, Some(0.8));
        assert_eq!(a.decoder_dims, vec![512, 512]);
        assert_eq!(a.coding_dim(), 1024);
    }

    #[test]
    fn parses_single_coding_layer() {
        let a = parse_architecture("n,128,n").unwrap();
        assert_eq!(a.encoder_dims, vec![128]);
        assert_eq!(a.drop_prob(), 0.0);
        assert!(a.decoder_dims.is_empty());
        let layout = a.layout(10).unwrap();
        assert_eq!(layout.layer_shapes(), vec![(10, 128), (128, 10)]);
    }

    #[test]
    fn rejects_degenerate_strings() {
        let cases = [
            ("n,dp(0.8),n", 1),
            ("", 0),
            ("n", 0),
            ("n,n", 1),
            ("128,n", 0),
            ("n,128", 1),
            ("n,128,dp(0.5),n", 2),
            ("n,128,dp(0.5),64,dp(0.2),128,n", 4),
            ("n,128,dp(1.0),128,n", 2),
            ("n,128,dp(-0.1),128,n", 2),
            ("n,0,n", 1),
            ("n,12x,n", 1),
            ("n,128,n,128,n", 2),
        ];
        for (s, pos) in cases {
            match parse_architecture(s) {
                Err(Error::Architecture { position, .. }) => assert_eq!(position, pos, "{s:?}"),
                other => panic!("{s:?} should fail, got {other:?}"),
            }
        }
    }

    #[test]
    fn whitespace_is_normalized() {
        let a = parse_architecture(" n, 128 ,dp( 0.65 ), 128 ,n ").unwrap();
        assert_eq!(a.to_string(), "n,128,dp(0.65),128,n");
    }

    #[test]
    fn explicit_zero_dropout_survives() {
        let a = parse_architecture("n,64,dp(0),64,n").unwrap();
        assert_eq!(a.to_string(), "n,64,dp(0),64,n");
    }

    #[test]
    fn tied_layout_requires_mirror() {
        let a = parse_architecture("n,8,8,12,dp(0.5),8,8,n").unwrap().with_tied(true);
        let l = a.layout(20).unwrap();
        assert_eq!(l.encoder, vec![20, 8, 8, 12]);
        assert_eq!(l.decoder, vec![12, 8, 8, 20]);
        let bad = parse_architecture("n,8,12,dp(0.5),4,n").unwrap().with_tied(true);
        assert!(bad.layout(20).is_err());
        // palindromic hidden widths without dp split at the middle
        let sym = parse_architecture("n,128,64,128,n").unwrap().with_tied(true);
        let l = sym.layout(50).unwrap();
        assert_eq!(l.encoder, vec![50, 128, 64]);
        assert_eq!(l.decoder, vec![64, 128, 50]);
        assert!(parse_architecture("n,128,64,n")
            .unwrap()
            .with_tied(true)
            .layout(50)
            .is_err());
    }

    #[test]
    fn parameter_counts() {
        let a = parse_architecture("n,128,n").unwrap();
        assert_eq!(a.parameter_count(17_768).unwrap(), 4_566_504);
        let tied = a.clone().with_tied(true);
        assert_eq!(tied.parameter_count(17_768).unwrap(), 128 * 17_768 + 128 + 17_768);
        assert!(tied.parameter_count(17_768).unwrap() < a.parameter_count(17_768).unwrap());
    }
}
