//! Small helpers for the literal grammars used in configuration values:
//! `name(arg, key=value, ...)` calls and complex number literals.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A parsed `name(args...)` or bare `name` term.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Call<'a> {
    pub name: &'a str,
    pub args: Vec<&'a str>,
}

impl<'a> Call<'a> {
    pub fn parse(input: &'a str) -> Result<Self> {
        let s = input.trim();
        match s.find('(') {
            None => {
                if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(Error::parse(input, "expected `name` or `name(...)`"));
                }
                Ok(Call { name: s, args: Vec::new() })
            }
            Some(open) => {
                if !s.ends_with(')') {
                    return Err(Error::parse(input, "missing closing parenthesis"));
                }
                let name = s[..open].trim();
                let inner = &s[open + 1..s.len() - 1];
                let args = split_top_level(inner, ',')
                    .map_err(|m| Error::parse(input, m))?
                    .into_iter()
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .collect();
                Ok(Call { name, args })
            }
        }
    }

    /// Looks up `key=value` among the arguments.
    pub fn keyword(&self, keys: &[&str]) -> Option<&'a str> {
        self.args.iter().find_map(|a| {
            let (k, v) = a.split_once('=')?;
            keys.contains(&k.trim()).then_some(v.trim())
        })
    }

    pub fn keyword_f64(&self, input: &str, keys: &[&str]) -> Result<f64> {
        let v = self.keyword(keys).ok_or_else(|| Error::parse(input, format!("missing `{}=`", keys[0])))?;
        parse_f64(v).map_err(|_| Error::parse(input, format!("`{}` is not a number", v)))
    }

    pub fn reject_unknown_keywords(&self, input: &str, allowed: &[&str]) -> Result<()> {
        for a in &self.args {
            if let Some((k, _)) = a.split_once('=') {
                if !allowed.contains(&k.trim()) {
                    return Err(Error::parse(input, format!("unknown parameter `{}`", k.trim())));
                }
            }
        }
        Ok(())
    }
}

/// Splits on `sep` at parenthesis depth zero.
pub(crate) fn split_top_level(s: &str, sep: char) -> std::result::Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced parentheses".into());
                }
            }
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced parentheses".into());
    }
    out.push(&s[start..]);
    Ok(out)
}

pub(crate) fn parse_f64(s: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    let t = s.trim();
    match t {
        "pi" => Ok(std::f64::consts::PI),
        "pi/2" => Ok(std::f64::consts::FRAC_PI_2),
        "pi/4" => Ok(std::f64::consts::FRAC_PI_4),
        _ => t.parse(),
    }
}

/// Parses complex literals: `2`, `-0.5`, `3i`, `-i`, `1+2i`, `1.5e-3-2i`, `(1+2i)`.
pub fn parse_complex(input: &str) -> Result<Complex64> {
    let mut s = input.trim();
    if s.starts_with('(') && s.ends_with(')') {
        s = s[1..s.len() - 1].trim();
    }
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::parse(input, "empty complex literal"));
    }
    let bad = || Error::parse(input, "not a complex number");
    if let Some(body) = s.strip_suffix(['i', 'j']) {
        // find the sign separating real and imaginary parts, skipping exponent signs
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            let c = bytes[i] as char;
            if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
                split = Some(i);
                break;
            }
        }
        let (re, im) = match split {
            Some(i) => (&body[..i], &body[i..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => 1.0,
            "-" => -1.0,
            v => v.parse::<f64>().map_err(|_| bad())?,
        };
        let re = re.parse::<f64>().map_err(|_| bad())?;
        Ok(Complex64::new(re, im))
    } else {
        Ok(Complex64::new(parse_f64(&s).map_err(|_| bad())?, 0.0))
    }
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}
