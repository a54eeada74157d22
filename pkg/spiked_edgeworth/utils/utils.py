"""
Shared logging, formatting and file helpers.
"""
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

DIVIDER_WIDTH: int = 25
FLOAT_FORMAT: str = "%.17g"


# =============================================================================
# 								LOGGING
# =============================================================================

def log_setup(level: int = logging.INFO):
	logging.basicConfig(level=level, stream=sys.stderr, force=True)

def log_divider(title: str = None):
	if title:
		logging.info('---------- ' + title + ' ----------')
	else:
		logging.info('-' * DIVIDER_WIDTH)

def log_stat(title: str, value):
	logging.info(f" - {title + ':':<40} {value}")

def log_table(title: str, df: pd.DataFrame):
	logging.info(f" - {title}:\n{df}")

def log_params(n: int, p: int, gamma_n: float, ell: float, seed: int | None = None):
	"""
	Echoes the effective model parameters of a run.
	"""
	log_stat("n", n)
	log_stat("p", p)
	log_stat("gamma_n (= p/n)", fmt(gamma_n))
	log_stat("ell", fmt(ell))
	if seed is not None:
		log_stat("seed", seed)


# =============================================================================
# 							FORMATTING
# =============================================================================

def fmt(value) -> str:
	"""
	Round-trip formatting (17 significant digits) of a float.
	:param value:
	:return:
	"""
	return FLOAT_FORMAT % float(value)

def to_plain(value):
	"""
	Converts numpy scalars/arrays (possibly nested in dicts/lists) into JSON-serializable python values.
	"""
	if isinstance(value, dict):
		return {k: to_plain(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [to_plain(v) for v in value]
	if isinstance(value, np.ndarray):
		return [to_plain(v) for v in value.tolist()]
	if isinstance(value, np.integer):
		return int(value)
	if isinstance(value, np.floating):
		return float(value)
	return value

def parse_grid(spec: str) -> np.ndarray:
	"""
	Parses a 'lo:hi:step' grid specification (both ends included).
	:param spec: e.g. '-3:3:0.5'
	:return: grid points
	"""
	try:
		lo, hi, step = (float(part) for part in spec.split(":"))
	except ValueError:
		raise ValueError(f"Grid must be given as lo:hi:step, got: {spec!r}")
	if step <= 0 or hi < lo:
		raise ValueError(f"Grid requires step > 0 and hi >= lo, got: {spec!r}")
	count = int(np.floor((hi - lo) / step + 1e-9)) + 1
	return lo + step * np.arange(count)


# =============================================================================
# 								FILES
# =============================================================================

def write_frame(df: pd.DataFrame, output: str | Path | None = None) -> str:
	"""
	Writes the frame as CSV (round-trip float formatting) to the given path, or returns the CSV text.
	:param df:
	:param output: target file, or None to only return the text
	:return: the CSV text
	"""
	text = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
	if output is not None:
		Path(output).parent.mkdir(parents=True, exist_ok=True)
		with open(output, "w", newline="") as f_out:
			f_out.write(text)
	return text

def write_json(obj: dict, output: str | Path | None = None) -> str:
	"""
	Writes the object as an indented JSON document. Floats use python's shortest round-trip repr.
	"""
	text = json.dumps(to_plain(obj), indent=2) + "\n"
	if output is not None:
		Path(output).parent.mkdir(parents=True, exist_ok=True)
		with open(output, "w") as f_out:
			f_out.write(text)
	return text

def read_json(path: str | Path) -> dict:
	with open(path, "r") as f_in:
		return json.load(f_in)
