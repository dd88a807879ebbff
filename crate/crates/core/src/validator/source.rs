//! Light structural facts about a Java compilation unit: package, imports,
//! the top-level type and where its body closes.

use std::ops::Range;

use crate::code_model::{tokenize, CodeError, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportDecl {
    /// Normalized statement, e.g. `import java.util.List;`.
    pub statement: String,
    /// Imported name without `import`/`static`/`;`, e.g. `java.util.List`.
    pub path: String,
    pub is_static: bool,
    /// Byte range of the statement in the source.
    pub span: Range<usize>,
}

impl ImportDecl {
    /// Simple name the import makes visible (`None` for wildcards).
    pub fn simple_name(&self) -> Option<&str> {
        let last = self.path.rsplit('.').next()?;
        (last != "*").then_some(last)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JavaFile {
    pub package: Option<String>,
    pub imports: Vec<ImportDecl>,
    /// Byte range of the `package ...;` statement.
    pub package_span: Option<Range<usize>>,
    pub type_name: String,
    /// Byte offset of the top-level type's closing brace.
    pub body_close: usize,
    /// Names of every type declared in the file.
    pub declared_types: Vec<String>,
}

impl JavaFile {
    pub fn parse(text: &str) -> Result<Self, CodeError> {
        let tokens: Vec<Token> = tokenize(text)?
            .into_iter()
            .filter(|t| t.kind != TokenKind::Comment)
            .collect();
        let mut package = None;
        let mut package_span = None;
        let mut imports = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let t = &tokens[i];
            let is_header = t.is_keyword("package") || t.is_keyword("import");
            if !is_header {
                if t.is_punct("@") || t.is_punct(";") {
                    i += 1;
                    continue;
                }
                break;
            }
            let end = (i..tokens.len())
                .find(|&j| tokens[j].is_punct(";"))
                .ok_or(CodeError::NoClassFound)?;
            let mut body = &tokens[i + 1..end];
            let is_static = body.first().is_some_and(|t| t.is_keyword("static"));
            if is_static {
                body = &body[1..];
            }
            let path: String = body.iter().map(|t| t.text.as_str()).collect();
            let span = t.start..tokens[end].end();
            if t.is_keyword("package") {
                package = Some(path);
                package_span = Some(span);
            } else {
                let statement = if is_static {
                    format!("import static {path};")
                } else {
                    format!("import {path};")
                };
                imports.push(ImportDecl {
                    statement,
                    path,
                    is_static,
                    span,
                });
            }
            i = end + 1;
        }

        let mut declared_types = Vec::new();
        let mut top: Option<(String, usize)> = None;
        let mut depth = 0usize;
        for (j, t) in tokens.iter().enumerate() {
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                depth = depth.checked_sub(1).ok_or(CodeError::UnbalancedBraces {
                    line: t.line,
                    offset: t.start,
                })?;
                if depth == 0 {
                    if let Some((_, close)) = top.as_mut().filter(|(_, c)| *c == usize::MAX) {
                        *close = t.start;
                    }
                }
            } else if matches!(t.text.as_str(), "class" | "interface" | "enum" | "record")
                && t.kind == TokenKind::Keyword
                && (j == 0 || !tokens[j - 1].is_punct("."))
            {
                if let Some(name) = tokens.get(j + 1).filter(|n| n.kind == TokenKind::Identifier) {
                    declared_types.push(name.text.clone());
                    if depth == 0 && top.is_none() {
                        top = Some((name.text.clone(), usize::MAX));
                    }
                }
            }
        }
        let (type_name, body_close) = top.ok_or(CodeError::NoClassFound)?;
        if body_close == usize::MAX {
            return Err(CodeError::NoClassFound);
        }
        Ok(Self {
            package,
            imports,
            package_span,
            type_name,
            body_close,
            declared_types,
        })
    }

    /// Fully qualified name of the top-level type.
    pub fn qualified_name(&self) -> String {
        match &self.package {
            Some(p) => format!("{p}.{}", self.type_name),
            None => self.type_name.clone(),
        }
    }

    pub fn imports_simple_name(&self, name: &str) -> bool {
        self.imports
            .iter()
            .any(|i| !i.is_static && i.simple_name() == Some(name))
    }
}
