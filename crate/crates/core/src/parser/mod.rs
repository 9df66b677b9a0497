//! Office-action parsing: bibliographic fields, technical keywords, and
//! template placeholder autofill.

mod biblio;
mod keywords;
mod template;

pub use biblio::{expand_claims, parse_oa, render_claims, BiblioInfo, Statute};
pub use keywords::{
    extract_tech_keywords, Keyword, KeywordConfig, KeywordDoc, PhraseSource, TechKeywords, DEFAULT_KEEP_LIST,
    PATENT_BOILERPLATE,
};
pub use template::{
    autofill, parse_placeholders, template_blanks, AutofillResult, BlankKind, FilledSpan, Placeholder,
    PlaceholderError, TemplateBlank, BIBLIO_FIELDS, KEYWORD_FIELDS,
};
