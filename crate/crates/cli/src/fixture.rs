use std::path::Path;
use std::process::ExitCode;

use anyhow::Result;

use frameprobe::jsonl::ArtifactHeader;
use frameprobe::lexicon::serialize_lexicon;
use frameprobe::synthetic::separable_corpus;

use crate::commands;

const SENTENCES: &str = "\
dlg-01\tMary travels to Rome
dlg-01\tMary bought the tickets
dlg-01\tTom goes to Paris
dlg-02\tLi travels to Japan
dlg-02\tWang bought the shoes
dlg-02\tAnna goes to Beijing
dlg-03\tTom travels to Paris
dlg-03\tAnna bought the bread
dlg-03\tLi goes to Rome
dlg-04\tWang travels to Beijing
dlg-04\tMary bought the books
dlg-04\tTom goes to Japan
";

const PIPELINE: &str = r#"lexicon = "lexicon.json"
workdir = "run"
seed = 7
stages = ["train", "parse", "graph", "probes", "baseline", "eval"]

[train]
gold = "gold.jsonl"
epochs = 100
lr = 0.5
batch_size = 4
dim = 32
fe_hidden = 64

[parse]
input = "sentences.txt"

[probes]
types = "IFES,EFES,SFES,IFESR,EFESR,FFR"
k = 3

[baseline]
repeats = 5

[eval]
adapter = "random"
"#;

pub fn write(dir: &Path) -> Result<ExitCode> {
    let (lex, gold) = separable_corpus();
    commands::write(&dir.join("lexicon.json"), serialize_lexicon(&lex).as_bytes())?;
    let mut buf = Vec::new();
    frameprobe::jsonl::write_jsonl(&mut buf, &ArtifactHeader::new("annotations", None, "fixture"), &gold)?;
    commands::write(&dir.join("gold.jsonl"), &buf)?;
    commands::write(&dir.join("sentences.txt"), SENTENCES.as_bytes())?;
    commands::write(&dir.join("pipeline.toml"), PIPELINE.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}
