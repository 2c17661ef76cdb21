use super::ast::CmpOp;
use super::parser::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Int(u64),
    Bp(u64),
    Str(String),
    Op(CmpOp),
    Slash,
    Comma,
    Semi,
    Plus,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Bp(v) => format!("`{v}bp`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Op(op) => format!("`{}`", op.symbol()),
            Tok::Slash => "`/`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Plus => "`+`".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tokenizes a policy source. Also returns the position just past the last
/// character, used for end-of-input errors.
pub(crate) fn lex(source: &str) -> Result<(Vec<Spanned>, (usize, usize)), ParseError> {
    let mut cur = Cursor {
        chars: source.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, col) = (cur.line, cur.col);
        let err = |msg: String| ParseError::new(line, col, msg);

        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }

        let tok = match c {
            ';' => {
                cur.bump();
                Tok::Semi
            }
            ',' => {
                cur.bump();
                Tok::Comma
            }
            '/' => {
                cur.bump();
                Tok::Slash
            }
            '+' => {
                cur.bump();
                Tok::Plus
            }
            '<' => {
                cur.bump();
                Tok::Op(CmpOp::Lt)
            }
            '>' => {
                cur.bump();
                Tok::Op(CmpOp::Gt)
            }
            '=' | '!' => {
                cur.bump();
                if cur.peek() != Some('=') {
                    return Err(err(format!("expected `{c}=`")));
                }
                cur.bump();
                Tok::Op(if c == '=' { CmpOp::Eq } else { CmpOp::Ne })
            }
            '"' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None | Some('\n') => return Err(err("unterminated string".into())),
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            _ => return Err(err("bad escape in string".into())),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Tok::Str(s)
            }
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
                    digits.push(d);
                    cur.bump();
                }
                let value: u64 = digits
                    .parse()
                    .map_err(|_| err(format!("integer `{digits}` out of range")))?;
                let mut suffix = String::new();
                while let Some(w) = cur.peek().filter(|c| is_word_char(*c)) {
                    suffix.push(w);
                    cur.bump();
                }
                match suffix.as_str() {
                    "" => Tok::Int(value),
                    "bp" => Tok::Bp(value),
                    _ => return Err(err(format!("malformed number `{digits}{suffix}`"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut w = String::new();
                while let Some(x) = cur.peek().filter(|c| is_word_char(*c)) {
                    w.push(x);
                    cur.bump();
                }
                Tok::Word(w)
            }
            other => return Err(err(format!("unexpected character {other:?}"))),
        };
        out.push(Spanned { tok, line, col });
    }
    Ok((out, (cur.line, cur.col)))
}
