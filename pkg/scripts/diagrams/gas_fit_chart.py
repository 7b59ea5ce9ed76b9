from .base_diagram import BaseDiagram
import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots


class GasFitChart(BaseDiagram):
    """Measured gas and allocation against the fitted affine bound (``data`` is an AffineBound)."""

    def generate(self):
        bound = self.data
        if bound is None or not bound.sizes:
            print(f"Warning: No measurements for '{self.title}'")
            return None
        sizes = np.array(bound.sizes)
        fig = make_subplots(rows=1, cols=2, subplot_titles=("Gas", "Allocated bytes"))
        fig.add_trace(go.Scatter(x=sizes, y=bound.gas, mode='markers', name='measured gas'), row=1, col=1)
        fig.add_trace(go.Scatter(x=sizes, y=bound.step * sizes + bound.base, mode='lines',
                                 name=f'{bound.step}·n + {bound.base}'), row=1, col=1)
        fig.add_trace(go.Scatter(x=sizes, y=bound.allocs, mode='markers', name='measured alloc'), row=1, col=2)
        fig.add_trace(go.Scatter(x=sizes, y=bound.alloc_step * sizes + bound.alloc_base, mode='lines',
                                 name=f'{bound.alloc_step}·n + {bound.alloc_base}'), row=1, col=2)
        fig.update_xaxes(title_text="n")
        fig.update_layout(title=dict(text=self.title, font=dict(size=16)), template=self.template,
                          margin=dict(b=20, l=5, r=5, t=60))
        return fig
