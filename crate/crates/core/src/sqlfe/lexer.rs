use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Bare word; keywords are bare words compared case-insensitively.
    Word(String),
    /// `"double quoted"` identifier, never a keyword.
    Quoted(String),
    Int(String),
    Float(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(&self.tok, Tok::Sym(t) if *t == s)
    }

    pub fn describe(&self) -> String {
        match &self.tok {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Quoted(w) => format!("\"{w}\""),
            Tok::Int(s) | Tok::Float(s) => format!("number {s}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "<=", ">=", "!=", "<>", "(", ")", "[", "]", ",", "*", "+", "-", "/", "%", "=", "<", ">", ";", ".",
];

/// Splits `src` into tokens. Positions are 1-based; `first_line` numbers the
/// first line of `src`.
pub fn tokenize(src: &str, first_line: usize) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, first_line, 1usize);
    let err = |line, column, message: String| SyntaxError {
        line,
        column,
        message,
        expected: vec![],
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Word(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let mut float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            if float {
                Tok::Float(text)
            } else {
                Tok::Int(text)
            }
        } else if c == '\'' || c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(err(start_line, start_col, "unterminated quoted text".into()));
                    }
                    Some(&q) if q == c => {
                        if chars.get(i + 1) == Some(&c) {
                            s.push(c);
                            i += 2;
                        } else {
                            i += 1;
                            break;
                        }
                    }
                    Some(&'\n') => {
                        s.push('\n');
                        i += 1;
                        line += 1;
                        col = 0;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            if c == '\'' {
                Tok::Str(s)
            } else {
                Tok::Quoted(s)
            }
        } else {
            let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    i += s.len();
                    Tok::Sym(s)
                }
                None => {
                    return Err(err(line, col, format!("unexpected character `{c}`")));
                }
            }
        };
        // Quoted text may span lines; otherwise the column advances by width.
        if line == start_line {
            col += i - start;
        } else {
            col += chars[start..i].iter().rev().take_while(|&&ch| ch != '\n').count();
        }
        out.push(Token {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, 1).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("x >= 1.5e-3 AND y<>'it''s'"),
            vec![
                Tok::Word("x".into()),
                Tok::Sym(">="),
                Tok::Float("1.5e-3".into()),
                Tok::Word("AND".into()),
                Tok::Word("y".into()),
                Tok::Sym("<>"),
                Tok::Str("it's".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks("a[2]")[1], Tok::Sym("["));
        assert_eq!(toks("1e5")[0], Tok::Float("1e5".into()));
        assert_eq!(toks("7 e")[0], Tok::Int("7".into()));
    }

    #[test]
    fn positions() {
        let t = tokenize("SELECT\n  x", 1).unwrap();
        assert_eq!((t[1].line, t[1].column), (2, 3));
    }

    #[test]
    fn bad_character() {
        let e = tokenize("x @ y", 1).unwrap_err();
        assert_eq!(e.column, 3);
    }
}
