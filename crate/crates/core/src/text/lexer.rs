use crate::diag::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    /// Unsigned magnitude; the parser applies a leading minus.
    Int(u64),
    Str(String),
    /// Duration literal normalized to milliseconds.
    Dur(u64),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Dur(d) => format!("`{d}ms`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

const SYMBOLS: [&str; 28] = [
    "->", ":=", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "=", "<", ">", "+",
    "-", "*", "/", "%", "!", "?",
];

/// Splits source text into tokens. Lexical errors are returned alongside
/// the tokens; offending characters are skipped.
pub(crate) fn lex(src: &str, file: u32) -> (Vec<Token>, Vec<(Span, String)>) {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut errs = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32| {
        let c = chars[*i];
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(file, line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                advance(&mut i, &mut line, &mut col);
            }
            toks.push(Token { tok: Tok::Ident(s), span });
            continue;
        }
        if c.is_ascii_digit() {
            let mut digits = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                digits.push(chars[i]);
                advance(&mut i, &mut line, &mut col);
            }
            let mut suffix = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                suffix.push(chars[i]);
                advance(&mut i, &mut line, &mut col);
            }
            let Ok(n) = digits.parse::<u64>() else {
                errs.push((span, format!("number `{digits}` is too large")));
                continue;
            };
            let tok = match suffix.as_str() {
                "" => Tok::Int(n),
                "ms" => Tok::Dur(n),
                "s" => match n.checked_mul(1000) {
                    Some(ms) => Tok::Dur(ms),
                    None => {
                        errs.push((span, format!("duration `{digits}s` is too large")));
                        continue;
                    }
                },
                other => {
                    errs.push((span, format!("unknown suffix `{other}` on number (expected `ms` or `s`)")));
                    continue;
                }
            };
            toks.push(Token { tok, span });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col);
            let mut s = String::new();
            let mut closed = false;
            while i < chars.len() {
                let d = chars[i];
                if d == '\n' {
                    break;
                }
                advance(&mut i, &mut line, &mut col);
                match d {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => {
                        let Some(&e) = chars.get(i) else { break };
                        advance(&mut i, &mut line, &mut col);
                        match e {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            '"' => s.push('"'),
                            '\\' => s.push('\\'),
                            other => {
                                errs.push((span, format!("unknown escape `\\{other}`")));
                            }
                        }
                    }
                    d => s.push(d),
                }
            }
            if closed {
                toks.push(Token { tok: Tok::Str(s), span });
            } else {
                errs.push((span, "unterminated string literal".into()));
            }
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            for _ in 0..sym.len() {
                advance(&mut i, &mut line, &mut col);
            }
            toks.push(Token { tok: Tok::Sym(sym), span });
            continue;
        }
        errs.push((span, format!("unexpected character `{}`", c.escape_debug())));
        advance(&mut i, &mut line, &mut col);
    }
    toks.push(Token { tok: Tok::Eof, span: Span::new(file, line, col) });
    (toks, errs)
}
