//! Architecture strings such as `5x MGCONV96(16) + MGCONV128(16) + FC256`.
//!
//! Terms are joined by `+`. `MGCONV<out>(<scales>)` is a wavelet layer,
//! `CHEBCONV<out>(<order>)` a Chebyshev layer with `order` polynomial terms,
//! and an optional final `FC<out>` a per-vertex affine map. A term may be
//! prefixed with `<n>x` to repeat it.

use std::fmt;
use std::str::FromStr;

use crate::operators::MAX_LAYER_SCALES;
use crate::MgcnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Mgconv { out: usize, scales: usize },
    Chebconv { out: usize, order: usize },
    Fc { out: usize },
}

impl LayerSpec {
    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Mgconv { out, .. } | LayerSpec::Chebconv { out, .. } | LayerSpec::Fc { out } => out,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Mgconv { out, scales } => write!(f, "MGCONV{out}({scales})"),
            LayerSpec::Chebconv { out, order } => write!(f, "CHEBCONV{out}({order})"),
            LayerSpec::Fc { out } => write!(f, "FC{out}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::out_dim)
    }

    /// The same skeleton with every wavelet layer swapped for a Chebyshev
    /// layer of `order` terms.
    pub fn with_chebyshev(&self, order: usize) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Mgconv { out, .. } => LayerSpec::Chebconv { out, order },
                other => other,
            })
            .collect();
        Self { layers }
    }
}

fn parse_term(term: &str) -> Result<LayerSpec, String> {
    let number = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad number '{s}' in '{term}'"));
    let with_arg = |rest: &str| -> Result<(usize, usize), String> {
        let open = rest.find('(').ok_or_else(|| format!("missing '(' in '{term}'"))?;
        let inner = rest[open + 1..].strip_suffix(')').ok_or_else(|| format!("missing ')' in '{term}'"))?;
        Ok((number(&rest[..open])?, number(inner)?))
    };
    let upper = term.to_ascii_uppercase();
    let spec = if let Some(rest) = upper.strip_prefix("MGCONV") {
        let (out, scales) = with_arg(rest)?;
        if scales == 0 || scales > MAX_LAYER_SCALES {
            return Err(format!("scale count must be in 1..={MAX_LAYER_SCALES}"));
        }
        LayerSpec::Mgconv { out, scales }
    } else if let Some(rest) = upper.strip_prefix("CHEBCONV") {
        let (out, order) = with_arg(rest)?;
        if order == 0 {
            return Err("Chebyshev order must be positive".into());
        }
        LayerSpec::Chebconv { out, order }
    } else if let Some(rest) = upper.strip_prefix("FC") {
        LayerSpec::Fc { out: number(rest)? }
    } else {
        return Err(format!("unknown layer '{term}'"));
    };
    if spec.out_dim() == 0 {
        return Err(format!("zero output width in '{term}'"));
    }
    Ok(spec)
}

fn split_repeat(term: &str) -> Result<(usize, &str), String> {
    let digits = term.find(|c: char| !c.is_ascii_digit()).unwrap_or(term.len());
    if digits == 0 {
        return Ok((1, term));
    }
    let rest = term[digits..].trim_start();
    match rest.strip_prefix(['x', 'X', '×']) {
        Some(body) => {
            let n: usize = term[..digits].parse().map_err(|_| format!("bad repeat in '{term}'"))?;
            if n == 0 {
                return Err(format!("zero repeat in '{term}'"));
            }
            Ok((n, body.trim_start()))
        }
        None => Err(format!("unknown layer '{term}'")),
    }
}

impl FromStr for Architecture {
    type Err = MgcnError;

    fn from_str(text: &str) -> Result<Self, MgcnError> {
        let err = |msg: String| MgcnError::Architecture { text: text.to_string(), msg };
        let mut layers = Vec::new();
        for raw in text.split('+') {
            let (n, body) = split_repeat(raw.trim()).map_err(err)?;
            let spec = parse_term(body.trim()).map_err(err)?;
            if matches!(layers.last(), Some(LayerSpec::Fc { .. })) {
                return Err(err("FC may only appear once, at the end".into()));
            }
            if matches!(spec, LayerSpec::Fc { .. }) && n > 1 {
                return Err(err("FC cannot be repeated".into()));
            }
            layers.extend(std::iter::repeat_n(spec, n));
        }
        if !layers.iter().any(|l| !matches!(l, LayerSpec::Fc { .. })) {
            return Err(err("at least one convolution layer is required".into()));
        }
        Ok(Self { layers })
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut i = 0;
        let mut first = true;
        while i < self.layers.len() {
            let run = self.layers[i..].iter().take_while(|&&l| l == self.layers[i]).count();
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if run > 1 {
                write!(f, "{run}x ")?;
            }
            write!(f, "{}", self.layers[i])?;
            i += run;
        }
        Ok(())
    }
}
