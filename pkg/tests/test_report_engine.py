"""Tests for result rows and report artifacts."""

import json

import numpy as np
import pytest

from flylora.core.errors import InvalidParameterError, ReportError
from flylora.core.report_engine import (
    ResultRow,
    emit_report,
    load_report,
    summarize_rows,
    write_json,
    write_trace_csv,
)
from flylora.core.training import EpochRecord, TrainingTrace

ROWS = [
    ResultRow('flylora', 'task0', 0, 'mse', 'before-merge', 0.1),
    ResultRow('flylora', 'task0', 1, 'mse', 'before-merge', 0.30000000000000004),
    ResultRow('lora_fa', 'task1', 0, 'accuracy', 'after-merge', 0.75),
]


def test_row_validation():
    with pytest.raises(InvalidParameterError):
        ResultRow('flylora', 'task0', 0, 'loss', 'before-merge', 1.0)
    with pytest.raises(ValueError):
        ResultRow('flylora', 'task0', 0, 'mse', 'during', 1.0)
    assert ResultRow('flylora', 'task0', '3', 'mse', 'after-merge', 1).seed == 3


def test_csv_layout(tmp_path):
    path = emit_report(ROWS, tmp_path / 'out' / 'report.csv')
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'variant,task,seed,metric,phase,value'
    assert lines[1] == 'flylora,task0,0,mse,before-merge,0.1'
    assert lines[2].endswith('0.30000000000000004')
    assert len(lines) == 4


def test_csv_and_json_read_back(tmp_path):
    assert load_report(emit_report(ROWS, tmp_path / 'r.csv')) == ROWS
    assert load_report(emit_report(ROWS, tmp_path / 'r.json', fmt='json')) == ROWS


def test_malformed_reports(tmp_path):
    bad_header = tmp_path / 'bad.csv'
    bad_header.write_text('a,b\n1,2\n', encoding='utf-8')
    with pytest.raises(ReportError):
        load_report(bad_header)
    bad_metric = tmp_path / 'metric.json'
    bad_metric.write_text(json.dumps([{'variant': 'x', 'task': 't', 'seed': 0, 'metric': 'loss',
                                       'phase': 'before-merge', 'value': 1.0}]), encoding='utf-8')
    with pytest.raises(ReportError):
        load_report(bad_metric)
    with pytest.raises(ReportError):
        load_report(tmp_path / 'missing.csv')


def test_write_json_is_sorted_and_plain(tmp_path):
    path = write_json({'b': np.float64(1.5), 'a': np.arange(3)}, tmp_path / 'x.json')
    text = path.read_text(encoding='utf-8')
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {'a': [0, 1, 2], 'b': 1.5}


def test_trace_csv(tmp_path):
    trace = TrainingTrace('flylora', 'task0', 0, [EpochRecord(0, 1.0, 2.0, [0, 0]), EpochRecord(1, 0.5, 0.25, [3, 5])])
    lines = write_trace_csv(trace, tmp_path / 't.csv').read_text(encoding='utf-8').splitlines()
    assert lines == ['epoch,train_loss,eval_loss,histogram', '0,1.0,2.0,0;0', '1,0.5,0.25,3;5']


def test_summary_groups_over_tasks_and_seeds():
    summary = summarize_rows(ROWS)
    fly = next(item for item in summary if item['variant'] == 'flylora')
    assert fly['count'] == 2
    assert fly['mean'] == pytest.approx(0.2)
    assert fly['std'] == pytest.approx(np.sqrt(0.02))
    lora = next(item for item in summary if item['variant'] == 'lora_fa')
    assert lora['std'] == 0.0
