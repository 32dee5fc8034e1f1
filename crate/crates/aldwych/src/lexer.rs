//! Hand-rolled lexer for surface programs and core dumps.
//!
//! The same scanner serves both grammars; [`Mode::Core`] additionally allows
//! `%` inside identifiers, which is how generated names are kept out of the
//! surface namespace.

use crate::diag::Diagnostic;
use crate::span::Span;
use crate::token::{Token, TokenKind};
use num_bigint::BigInt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Surface,
    Core,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, Diagnostic> {
    tokenize_mode(text, Mode::Surface)
}

pub fn tokenize_mode(text: &str, mode: Mode) -> Result<Vec<Token>, Diagnostic> {
    Lexer { text, chars: text.char_indices().peekable(), line: 1, col: 1, mode }.run()
}

struct Lexer<'a> {
    text: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: u32,
    col: u32,
    mode: Mode,
}

const PUNCT: &str = "#()[]{},;:.?^$~=<>+-*/\\@";

impl<'a> Lexer<'a> {
    fn run(mut self) -> Result<Vec<Token>, Diagnostic> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let (start, line, col) = (self.offset(), self.line, self.col);
            let Some(c) = self.peek() else {
                out.push(Token {
                    kind: TokenKind::End,
                    span: Span::new(start, start, line, col),
                });
                return Ok(out);
            };
            let kind = if c.is_ascii_alphabetic() {
                self.ident()
            } else if c.is_ascii_digit() {
                self.number()
            } else if c == '\'' {
                self.atom(line, col)?
            } else if c == '|' {
                let mut n = 0u32;
                while self.peek() == Some('|') {
                    self.bump();
                    n += 1;
                }
                TokenKind::Bars(n)
            } else if c == '→' {
                self.bump();
                TokenKind::RArrow
            } else if c == '←' {
                self.bump();
                TokenKind::LArrow
            } else if c == '-' && self.peek2() == Some('>') {
                self.bump();
                self.bump();
                TokenKind::RArrow
            } else if c == '<' && self.peek2() == Some('-') {
                self.bump();
                self.bump();
                TokenKind::LArrow
            } else if PUNCT.contains(c) {
                self.bump();
                TokenKind::Punct(c)
            } else {
                return Err(Diagnostic::error(
                    "E_PARSE",
                    Span::new(start, start + c.len_utf8(), line, col),
                    format!("unexpected character `{}`", c),
                ));
            };
            out.push(Token { kind, span: Span::new(start, self.offset(), line, col) });
        }
    }

    fn ident(&mut self) -> TokenKind {
        let start = self.offset();
        let first = self.bump().unwrap();
        while let Some(c) = self.peek() {
            let cont = c.is_ascii_alphanumeric() || c == '_' || (self.mode == Mode::Core && c == '%');
            if !cont {
                break;
            }
            self.bump();
        }
        let s = self.text[start..self.offset()].to_string();
        if first.is_ascii_uppercase() {
            TokenKind::CapIdent(s)
        } else {
            TokenKind::Ident(s)
        }
    }

    fn number(&mut self) -> TokenKind {
        let start = self.offset();
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        TokenKind::Number(self.text[start..self.offset()].parse::<BigInt>().unwrap())
    }

    fn atom(&mut self, line: u32, col: u32) -> Result<TokenKind, Diagnostic> {
        let open = self.offset();
        self.bump(); // opening quote
        let start = self.offset();
        loop {
            match self.peek() {
                Some('\'') => {
                    let s = self.text[start..self.offset()].to_string();
                    self.bump();
                    return Ok(TokenKind::Atom(s));
                }
                Some('\n') | None => {
                    return Err(Diagnostic::error(
                        "E_PARSE",
                        Span::new(open, self.offset(), line, col),
                        "unterminated quoted atom",
                    ));
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek2() == Some('/') => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.text.len(), |&(i, _)| i)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&mut self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn channel_ops_lex_as_separate_puncts() {
        use TokenKind::*;
        assert_eq!(
            kinds("in1?m | out^m"),
            vec![
                Ident("in1".into()),
                Punct('?'),
                Ident("m".into()),
                Bars(1),
                Ident("out".into()),
                Punct('^'),
                Ident("m".into()),
                End
            ]
        );
    }

    #[test]
    fn empty_input_is_just_end() {
        assert_eq!(kinds(""), vec![TokenKind::End]);
    }

    #[test]
    fn ascii_and_unicode_arrows_agree() {
        assert_eq!(kinds("a -> b"), kinds("a → b"));
        assert_eq!(kinds("x <- w"), kinds("x ← w"));
    }

    #[test]
    fn bar_runs_carry_exact_counts() {
        use TokenKind::*;
        assert_eq!(kinds("| || |||"), vec![Bars(1), Bars(2), Bars(3), End]);
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(kinds("a // rest of line\nb"), kinds("a b"));
    }

    #[test]
    fn minus_bar_gt_is_three_tokens() {
        use TokenKind::*;
        // `-|>` is the anonymous-return spelling: minus, bar, then the write.
        assert_eq!(
            kinds("colour-|>x"),
            vec![Ident("colour".into()), Punct('-'), Bars(1), Punct('>'), Ident("x".into()), End]
        );
    }

    #[test]
    fn quoted_atoms() {
        assert_eq!(kinds("'stop'"), vec![TokenKind::Atom("stop".into()), TokenKind::End]);
        assert!(tokenize("'oops").is_err());
    }

    #[test]
    fn percent_is_rejected_on_the_surface() {
        assert!(tokenize("x%1").is_err());
        assert!(tokenize_mode("x%1", Mode::Core).is_ok());
    }

    #[test]
    fn numbers_are_arbitrary_precision() {
        let toks = tokenize("123456789012345678901234567890").unwrap();
        match &toks[0].kind {
            TokenKind::Number(n) => {
                assert_eq!(n.to_string(), "123456789012345678901234567890")
            }
            other => panic!("unexpected token {:?}", other),
        }
    }
}
