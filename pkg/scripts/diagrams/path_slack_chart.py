from .base_diagram import BaseDiagram
import plotly.graph_objects as go


class PathSlackChart(BaseDiagram):
    """Gas slack (bound minus cost) of every checked path, grouped by function (``data`` is a GasReport)."""

    def generate(self):
        report = self.data
        if report is None or not report.path_count:
            print(f"Warning: No checked paths for '{self.title}'")
            return None
        fig = go.Figure()
        for f in report.functions:
            slacks = [p.slack[0] for p in f.paths]
            fig.add_trace(go.Bar(
                x=[f"{f.function}#{k}" for k in range(len(f.paths))], y=slacks, name=f.function,
                marker_color=['#2ca02c' if s >= 0 else '#d62728' for s in slacks],
                hovertext=[p.line() for p in f.paths], hoverinfo='text'))
        fig.update_layout(title=dict(text=self.title, font=dict(size=16)), template=self.template,
                          yaxis_title="gas slack", xaxis=dict(showticklabels=False), barmode='group')
        return fig
