//! Trivial-computation grammar.
//!
//! Recognized forms (matched against the canonical key):
//!
//! - `what is <expr>`, `compute <expr>`, `<expr> = ?`: integer arithmetic with
//!   `+ - * × / ÷` and parentheses, at least one binary operator
//! - `convert <int> to hex|binary|decimal`, where `<int>` may be decimal,
//!   `0x…` or `0b…`
//! - `uppercase "<text>"`, `lowercase "<text>"`
//!
//! Anything else, any overflow, and any division that leaves a remainder
//! yields `None`. The solver never guesses.

use std::sync::LazyLock;

use regex::Regex;

use super::canonical::canonicalize;

static CONVERT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^convert (0x[0-9a-f]+|0b[01]+|[0-9]+) to (hex|hexadecimal|binary|decimal)$")
        .expect("convert pattern")
});

// Case conversions read the quoted text from the raw prompt; the canonical
// key has already been lowercased.
static CASE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)^\s*(uppercase|lowercase)\s+(?:"([^"]*)"|'([^']*)'|“([^”]*)”)\s*[?!.]*\s*$"#)
        .expect("case pattern")
});

/// Exact answer for prompts in the trivial-computation grammar.
pub fn deterministic_solve(prompt: &str) -> Option<String> {
    let key = canonicalize(prompt);
    let key = key.as_str().trim_end();

    if key.starts_with("uppercase ") || key.starts_with("lowercase ") {
        return solve_case(prompt);
    }
    if let Some(caps) = CONVERT.captures(key) {
        return convert(&caps[1], &caps[2]);
    }
    let expr = key
        .strip_prefix("what is ")
        .or_else(|| key.strip_prefix("compute "))
        .or_else(|| key.strip_suffix('='))?;
    evaluate(expr).map(|v| v.to_string())
}

fn solve_case(prompt: &str) -> Option<String> {
    let caps = CASE.captures(prompt)?;
    let text = caps.get(2).or(caps.get(3)).or(caps.get(4))?.as_str();
    match caps[1].to_ascii_lowercase().as_str() {
        "uppercase" => Some(text.to_uppercase()),
        "lowercase" => Some(text.to_lowercase()),
        _ => None,
    }
}

fn convert(value: &str, target: &str) -> Option<String> {
    let n: u128 = if let Some(hex) = value.strip_prefix("0x") {
        u128::from_str_radix(hex, 16).ok()?
    } else if let Some(bin) = value.strip_prefix("0b") {
        u128::from_str_radix(bin, 2).ok()?
    } else {
        value.parse().ok()?
    };
    Some(match target {
        "hex" | "hexadecimal" => format!("{n:#x}"),
        "binary" => format!("{n:#b}"),
        _ => n.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(i128),
    Plus,
    Minus,
    Times,
    Divide,
    Open,
    Close,
}

fn tokenize(s: &str) -> Option<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' => {
                chars.next();
            }
            '0'..='9' => {
                let mut n: i128 = 0;
                while let Some(&d) = chars.peek() {
                    let Some(v) = d.to_digit(10) else { break };
                    n = n.checked_mul(10)?.checked_add(i128::from(v))?;
                    chars.next();
                }
                out.push(Token::Num(n));
            }
            _ => {
                out.push(match c {
                    '+' => Token::Plus,
                    '-' | '−' => Token::Minus,
                    '*' | '×' => Token::Times,
                    '/' | '÷' => Token::Divide,
                    '(' => Token::Open,
                    ')' => Token::Close,
                    _ => return None,
                });
                chars.next();
            }
        }
    }
    Some(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    binary_ops: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Option<i128> {
        let mut acc = self.term()?;
        while let Some(op @ (Token::Plus | Token::Minus)) = self.peek() {
            self.bump();
            self.binary_ops += 1;
            let rhs = self.term()?;
            acc = match op {
                Token::Plus => acc.checked_add(rhs)?,
                _ => acc.checked_sub(rhs)?,
            };
        }
        Some(acc)
    }

    // term := factor (('*' | '/') factor)*
    fn term(&mut self) -> Option<i128> {
        let mut acc = self.factor()?;
        while let Some(op @ (Token::Times | Token::Divide)) = self.peek() {
            self.bump();
            self.binary_ops += 1;
            let rhs = self.factor()?;
            acc = match op {
                Token::Times => acc.checked_mul(rhs)?,
                _ => {
                    if rhs == 0 || acc.checked_rem(rhs)? != 0 {
                        return None;
                    }
                    acc.checked_div(rhs)?
                }
            };
        }
        Some(acc)
    }

    // factor := '-' factor | NUM | '(' expr ')'
    fn factor(&mut self) -> Option<i128> {
        match self.bump()? {
            Token::Minus => self.factor()?.checked_neg(),
            Token::Num(n) => Some(n),
            Token::Open => {
                let v = self.expr()?;
                (self.bump()? == Token::Close).then_some(v)
            }
            _ => None,
        }
    }
}

fn evaluate(expr: &str) -> Option<i128> {
    let tokens = tokenize(expr.trim())?;
    let mut p = Parser {
        tokens,
        pos: 0,
        binary_ops: 0,
    };
    let v = p.expr()?;
    (p.pos == p.tokens.len() && p.binary_ops > 0).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_templates() {
        assert_eq!(deterministic_solve("What is 2+2?").as_deref(), Some("4"));
        assert_eq!(deterministic_solve("compute 15 × 4").as_deref(), Some("60"));
        assert_eq!(deterministic_solve("15*4 = ?").as_deref(), Some("60"));
        assert_eq!(
            deterministic_solve("What is (3 + 4) * -2?").as_deref(),
            Some("-14")
        );
        assert_eq!(deterministic_solve("what is 84 / 12").as_deref(), Some("7"));
        assert_eq!(deterministic_solve("what is 2 - 3 - 4").as_deref(), Some("-5"));
    }

    #[test]
    fn refuses_what_it_cannot_prove() {
        assert_eq!(deterministic_solve("What is the meaning of life?"), None);
        assert_eq!(deterministic_solve("what is 22 / 7"), None);
        assert_eq!(deterministic_solve("what is 5 / 0"), None);
        assert_eq!(deterministic_solve("what is 1984"), None);
        assert_eq!(deterministic_solve("what is 2 + 2 and why"), None);
        assert_eq!(deterministic_solve("what is (2 + 2"), None);
        assert_eq!(deterministic_solve("what is 1,000 + 1"), None);
        let huge = format!("what is {} * {}", "9".repeat(30), "9".repeat(30));
        assert_eq!(deterministic_solve(&huge), None);
    }

    #[test]
    fn base_conversions() {
        // Oracle: Python-style formatting done by hand.
        assert_eq!(deterministic_solve("convert 255 to hex").as_deref(), Some("0xff"));
        assert_eq!(
            deterministic_solve("Convert 10 to binary").as_deref(),
            Some("0b1010")
        );
        assert_eq!(
            deterministic_solve("convert 0xff to decimal").as_deref(),
            Some("255")
        );
        assert_eq!(
            deterministic_solve("convert 0b101 to hex").as_deref(),
            Some("0x5")
        );
        assert_eq!(deterministic_solve("convert 0 to binary").as_deref(), Some("0b0"));
        assert_eq!(deterministic_solve("convert ten to hex"), None);
        assert_eq!(deterministic_solve("convert 255 to octal"), None);
    }

    #[test]
    fn hex_matches_independent_oracle() {
        fn to_hex(mut n: u64) -> String {
            const DIGITS: &[u8] = b"0123456789abcdef";
            if n == 0 {
                return "0x0".into();
            }
            let mut s = Vec::new();
            while n > 0 {
                s.push(DIGITS[(n % 16) as usize]);
                n /= 16;
            }
            s.reverse();
            format!("0x{}", String::from_utf8(s).unwrap())
        }
        for n in [1u64, 15, 16, 255, 256, 4095, 65535, 1 << 40, 123_456_789] {
            let got = deterministic_solve(&format!("convert {n} to hex"));
            assert_eq!(got, Some(to_hex(n)), "{n}");
        }
    }

    #[test]
    fn case_conversions_use_raw_text() {
        assert_eq!(
            deterministic_solve("Uppercase \"hello world\"").as_deref(),
            Some("HELLO WORLD")
        );
        assert_eq!(
            deterministic_solve("lowercase 'MFEE  Gate'").as_deref(),
            Some("mfee  gate")
        );
        assert_eq!(deterministic_solve("uppercase hello"), None);
    }
}
