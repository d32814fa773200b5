//! The arithmetic grammar `S → x | S+S | S−S | S*S | S/S` over the alphabet
//! `{x, +, -, *, /}`.

use crate::ndcore::RngStream;

pub const X: usize = 0;
pub const END: usize = 5;
/// Input-only token fed at the first step of generation.
pub const START: usize = 6;
/// Emittable tokens, including the end marker.
pub const VOCAB: usize = 6;
pub const DEFAULT_MAX_LEN: usize = 15;
const SYMBOLS: [char; 5] = ['x', '+', '-', '*', '/'];

pub fn token_char(t: usize) -> Option<char> {
    SYMBOLS.get(t).copied()
}

pub fn to_string(tokens: &[usize]) -> String {
    tokens.iter().filter_map(|&t| token_char(t)).collect()
}

/// Parses a string over the alphabet; `None` on a foreign character.
pub fn parse(s: &str) -> Option<Vec<usize>> {
    s.chars().map(|c| SYMBOLS.iter().position(|&y| y == c)).collect()
}

/// Samples a derivation, expanding `S` uniformly over the five productions
/// and restarting whenever the sentential form exceeds `max_len` symbols.
/// After 1000 failed attempts returns `x`.
pub fn cfg_sample(rng: &mut RngStream, max_len: usize) -> Vec<usize> {
    'attempt: for _ in 0..1000 {
        // leftmost derivation; `None` marks a pending nonterminal
        let mut out = Vec::new();
        let mut stack: Vec<Option<usize>> = vec![None];
        let mut length = 1;
        while let Some(top) = stack.pop() {
            match top {
                Some(t) => out.push(t),
                None => {
                    let p = rng.below(5);
                    if p == 0 {
                        out.push(X);
                    } else {
                        length += 2;
                        if length > max_len {
                            continue 'attempt;
                        }
                        stack.push(None);
                        stack.push(Some(p));
                        stack.push(None);
                    }
                }
            }
        }
        return out;
    }
    vec![X]
}

/// True iff the sequence is derivable and has at most `max_len` symbols.
/// The language is exactly `x (op x)*`.
pub fn cfg_valid(tokens: &[usize], max_len: usize) -> bool {
    !tokens.is_empty()
        && tokens.len() <= max_len
        && tokens.len() % 2 == 1
        && tokens
            .iter()
            .enumerate()
            .all(|(i, &t)| if i % 2 == 0 { t == X } else { (1..=4).contains(&t) })
}

pub fn cfg_valid_str(s: &str, max_len: usize) -> bool {
    parse(s).is_some_and(|t| cfg_valid(&t, max_len))
}
