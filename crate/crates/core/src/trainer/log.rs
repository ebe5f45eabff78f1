use std::io::Write;

use serde::Serialize;

use super::config::Task;
use crate::error::Result;

/// Metrics of a single optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub task_loss: Vec<f64>,
    pub disc: Vec<f64>,
    pub g: Vec<f64>,
    pub alpha: Vec<f64>,
    pub objective: f64,
}

/// Per-epoch summary. Losses and discrepancies are means over the epoch's
/// steps; `alpha` is the last step's weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub alpha: Vec<f64>,
    pub alpha_ema: Vec<f64>,
    pub task_loss: Vec<f64>,
    pub disc: Vec<f64>,
    pub objective: f64,
    /// Accuracy (classification) or MSE (regression) on the held-out target sample.
    pub eval_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainLog {
    pub domain_names: Vec<String>,
    pub task: Task,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn new(domain_names: Vec<String>, task: Task) -> Self {
        TrainLog {
            domain_names,
            task,
            steps: Vec::new(),
            epochs: Vec::new(),
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self.task {
            Task::Classification => "accuracy",
            Task::Regression => "mse",
        }
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// One row per (epoch, domain).
    pub fn write_trainlog_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,domain,alpha,alpha_ema,task_loss,disc")?;
        for e in &self.epochs {
            for d in 0..e.alpha.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    e.epoch, d, e.alpha[d], e.alpha_ema[d], e.task_loss[d], e.disc[d]
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `eval_metric` is accuracy or MSE, see [`TrainLog::metric_name`].
    pub fn write_eval_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,eval_metric")?;
        for e in &self.epochs {
            writeln!(out, "{},{}", e.epoch, e.eval_metric)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = TrainLog::new(vec!["a".into(), "b".into()], Task::Classification);
        log.epochs.push(EpochRecord {
            epoch: 0,
            alpha: vec![0.25, 0.75],
            alpha_ema: vec![0.5, 0.5],
            task_loss: vec![1.0, 2.0],
            disc: vec![0.0, 0.5],
            objective: 3.0,
            eval_metric: 0.9,
        });
        let mut buf = Vec::new();
        log.write_trainlog_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0,0.25,0.5,1,0");
        assert_eq!(lines[2], "0,1,0.75,0.5,2,0.5");

        let mut buf = Vec::new();
        log.write_eval_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,eval_metric\n0,0.9\n");
    }
}
