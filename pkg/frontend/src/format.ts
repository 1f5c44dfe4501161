/** Display formatting only; no probability arithmetic beyond rounding. */

export function pct(value: number, digits = 1): string {
  return `${(value * 100).toFixed(digits)}%`;
}

export function signedPct(value: number, digits = 1): string {
  const text = pct(Math.abs(value), digits);
  return value < 0 ? `−${text}` : `+${text}`;
}

export function riskColor(risk: number): string {
  // green (low) -> red (high) through amber; hue 120 down to 0
  const hue = Math.round(120 * (1 - Math.min(Math.max(risk, 0), 1)));
  return `hsl(${hue}, 70%, 42%)`;
}

export function barWidth(probability: number): string {
  return `${Math.max(probability * 100, 0.5).toFixed(2)}%`;
}
