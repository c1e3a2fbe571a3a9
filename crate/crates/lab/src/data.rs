use std::fs;
use std::path::Path;

use distill_lab_core::tasks::{
    gen_reverse_copy, gen_reverse_copy_split, gen_sine, gen_sine_split, ClassifDataset, Corpus, ReverseCopyParams,
    SeqDataset, Split,
};

use crate::config::TaskSpec;
use crate::emit;
use crate::error::{LabError, Result};

enum Raw {
    Sine([ClassifDataset; 3]),
    Seq([SeqDataset; 3]),
}

/// The three splits of one task instance, plus the frozen scheduling subset.
pub struct TaskData {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
    /// The first `schedule_eval_size` validation samples.
    pub schedule_eval: Corpus,
    raw: Raw,
}

impl TaskData {
    pub fn generate(task: &TaskSpec, seed: u64, schedule_eval_size: usize) -> Result<Self> {
        let raw = match *task {
            TaskSpec::Sine { n_train, n_val, n_test } => {
                let (train, test) = gen_sine(seed, n_train, n_test)?;
                let val = gen_sine_split(seed, Split::Validation, n_val)?;
                Raw::Sine([train, val, test])
            }
            TaskSpec::ReverseCopy {
                vocab_size,
                max_prefix,
                n_train,
                n_val,
                n_test,
            } => {
                let params = ReverseCopyParams { vocab_size, max_prefix };
                let (train, test) = gen_reverse_copy(seed, params, n_train, n_test)?;
                let val = gen_reverse_copy_split(seed, Split::Validation, params, n_val)?;
                if test.is_empty() {
                    return Err(LabError::Config(
                        "every test sequence also occurs in the training set; enlarge the task".into(),
                    ));
                }
                Raw::Seq([train, val, test])
            }
        };
        let [train, val, test] = match &raw {
            Raw::Sine(d) => d.each_ref().map(ClassifDataset::to_corpus),
            Raw::Seq(d) => d.each_ref().map(SeqDataset::to_corpus),
        };
        let schedule_eval = val.head(schedule_eval_size);
        Ok(Self {
            train,
            val,
            test,
            schedule_eval,
            raw,
        })
    }

    /// Writes `train`, `val` and `test` files into `dir`: CSV for classification, one
    /// space-separated sequence per line for sequence tasks.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))?;
        let names = ["train", "val", "test"];
        match &self.raw {
            Raw::Sine(d) => {
                for (name, data) in names.iter().zip(d) {
                    emit::classification_csv(&dir.join(format!("{name}.csv")), data)?;
                }
            }
            Raw::Seq(d) => {
                for (name, data) in names.iter().zip(d) {
                    emit::sequences_txt(&dir.join(format!("{name}.txt")), data)?;
                }
            }
        }
        Ok(())
    }
}
