//! Compiles and runs the code blocks in `book/` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/frames.md")]
pub mod frames {}

#[doc = include_str!("../../../book/src/scoring.md")]
pub mod scoring {}

#[doc = include_str!("../../../book/src/splits.md")]
pub mod splits {}

#[doc = include_str!("../../../book/src/witness.md")]
pub mod witness {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}

#[cfg(test)]
mod tests {
    use policykit_harness::ExperimentSpec;

    fn toml_blocks(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur: Option<String> = None;
        for line in text.lines() {
            match (&mut cur, line.trim()) {
                (None, "```toml") => cur = Some(String::new()),
                (Some(_), "```") => out.extend(cur.take()),
                (Some(buf), _) => {
                    buf.push_str(line);
                    buf.push('\n');
                }
                _ => {}
            }
        }
        out
    }

    #[test]
    fn experiment_files_in_the_book_parse() {
        let blocks = toml_blocks(include_str!("../../../book/src/harness.md"));
        assert!(!blocks.is_empty());
        for b in blocks {
            let spec = ExperimentSpec::from_toml(&b).unwrap_or_else(|e| panic!("{e}\n{b}"));
            spec.validate().unwrap();
        }
    }
}
