import json
import logging
from pathlib import Path
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

from .errors import InvalidInputError

# Fixed seed for the ids matplotlib writes into SVG files
SVG_HASH_SALT = 'pacconv'
FLOAT_FORMAT = '%.10g'


@dataclass
class ExperimentReport:
    """
    Rows of an experiment with a fixed column order.

    ``metadata`` holds everything needed to reproduce the run (master seed, echoed
    options, package version) and is written next to the CSV.
    """
    schema: tuple
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.schema = tuple(self.schema)
        if len(set(self.schema)) != len(self.schema):
            raise InvalidInputError(f'duplicate column names in schema {self.schema}')

    def add_row(self, **values):
        missing = [c for c in self.schema if c not in values]
        extra = [c for c in values if c not in self.schema]
        if missing or extra:
            raise InvalidInputError(f'row does not match the schema: missing {missing}, unexpected {extra}')
        self.rows.append({c: values[c] for c in self.schema})

    def extend(self, other):
        if other.schema != self.schema:
            raise InvalidInputError(f'cannot merge reports with schemas {self.schema} and {other.schema}')
        self.rows.extend(other.rows)

    def column(self, name):
        if name not in self.schema:
            raise InvalidInputError(f'unknown column {name!r}')
        return [row[name] for row in self.rows]

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=list(self.schema))

    def to_csv_text(self):
        return self.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

    def metadata_text(self):
        return json.dumps(self.metadata, sort_keys=True, indent=2, default=_json_default) + '\n'

    def write_csv(self, path):
        """
        Writes the rows to ``path`` and the metadata to ``<path>.meta.json``.

        Returns:
            The metadata path.
        """
        path = Path(path)
        path.write_text(self.to_csv_text(), encoding='utf-8', newline='')
        meta_path = path.with_name(path.name + '.meta.json')
        meta_path.write_text(self.metadata_text(), encoding='utf-8', newline='')
        logging.info(f'[CLI]: wrote {len(self.rows)} rows to {path}')
        return meta_path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, tuple)):
        return list(value)
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


def _save_svg(fig, path):
    with plt.rc_context({'svg.hashsalt': SVG_HASH_SALT}):
        fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logging.info(f'[CLI]: wrote plot to {path}')


def plot_channel_sweep(report, path):
    """
    Empirical mean (solid) with a shaded min-max band and the theoretical threshold
    (dashed), one color per layer kind.
    """
    df = report.to_frame()
    fig, ax = plt.subplots(figsize=(6, 4))
    for kind, group in df.groupby('kind', sort=True):
        group = group.sort_values('channels')
        line, = ax.plot(group['channels'], group['mean'], marker='o', label=f'{kind} empirical')
        ax.fill_between(group['channels'], group['min'], group['max'], color=line.get_color(), alpha=0.2)
        ax.plot(group['channels'], group['theory_threshold'], linestyle='--', color=line.get_color(),
                label=f'{kind} theory')
    ax.set_xlabel('channels (a = b)')
    ax.set_ylabel('spectral norm')
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)


ESTIMATES = ('ambient', 'sparse', 'conv_like', 'conv')


def plot_layer_constants(report, path, log_scale=True):
    """Per-layer squared constants under each estimate."""
    df = report.to_frame()
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(df))
    for estimate in ESTIMATES:
        values = df[estimate].astype(float)
        if values.notna().any():
            ax.plot(x, values, marker='o', label=estimate)
    ax.set_xticks(x)
    ax.set_xticklabels(df['layer'], rotation=45, ha='right', fontsize=7)
    ax.set_ylabel('c_i^2')
    if log_scale:
        ax.set_yscale('log')
    ax.set_title(str(df['architecture'].iloc[0]) if len(df) else '')
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)
