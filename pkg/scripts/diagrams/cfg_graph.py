from .base_diagram import BaseDiagram
import plotly.graph_objects as go
import networkx as nx


class CfgGraph(BaseDiagram):
    """Basic blocks of one function laid out by depth, coloured by static gas cost.

    ``data`` holds ``cfg`` (a function CFG), ``schedule`` and optionally
    ``report`` (the function's gas report, for the annotations per block).
    """

    def layers(self, cfg):
        forward = nx.DiGraph(cfg.graph)
        forward.remove_edges_from(cfg.back_edges)
        layer_of = {}
        for depth, generation in enumerate(nx.topological_generations(forward)):
            for node in generation:
                layer_of[node] = depth
        return forward, layer_of

    def generate(self):
        cfg = self.data.get('cfg')
        schedule = self.data.get('schedule')
        if cfg is None or not cfg.blocks:
            print(f"Warning: No blocks to draw for '{self.title}'")
            return None
        report = self.data.get('report')
        sites = report.sites if report is not None else []

        G, layer_of = self.layers(cfg)
        nx.set_node_attributes(G, layer_of, "layer")
        pos = nx.multipartite_layout(G, subset_key="layer", align="horizontal")

        edge_x, edge_y = [], []
        back_x, back_y = [], []
        for u, v in cfg.graph.edges():
            x0, y0 = pos[u]
            x1, y1 = pos[v]
            if (u, v) in cfg.back_edges:
                back_x.extend([x0, x1, None])
                back_y.extend([y0, y1, None])
            else:
                edge_x.extend([x0, x1, None])
                edge_y.extend([y0, y1, None])

        node_x, node_y, labels, hover, costs = [], [], [], [], []
        for start in sorted(cfg.blocks):
            block = cfg.blocks[start]
            cost = sum(schedule.static_cost(i.mnemonic) for i in block.instrs)
            declared = [s for s in sites if block.start <= s.offset < block.end]
            x, y = pos[start]
            node_x.append(x)
            node_y.append(y)
            costs.append(cost)
            labels.append(cfg.name_of(start))
            lines = [f"<b>{cfg.name_of(start)}</b> @ {start:#x}", f"{len(block.instrs)} instructions, gas {cost}"]
            lines += [f"add_gas {s.used} {s.alloc}" for s in declared]
            if start in cfg.loop_heads:
                lines.append("loop head")
            hover.append("<br>".join(lines))

        edge_trace = go.Scatter(x=edge_x, y=edge_y, line=dict(width=1, color='#888'), hoverinfo='none',
                                mode='lines', name='edge')
        back_trace = go.Scatter(x=back_x, y=back_y, line=dict(width=1, color='#d62728', dash='dot'),
                                hoverinfo='none', mode='lines', name='back edge')
        node_trace = go.Scatter(
            x=node_x, y=node_y, mode='markers+text', text=labels, textposition="top center",
            hoverinfo='text', hovertext=hover, name='block',
            marker=dict(
                showscale=True,
                colorscale='YlOrRd',
                color=costs,
                size=[12 + min(c, 400) / 20 for c in costs],
                colorbar=dict(thickness=15, title='Block gas', xanchor='left', title_side='right')
            )
        )

        fig = go.Figure(data=[edge_trace, back_trace, node_trace],
                        layout=go.Layout(
                            title=dict(text=self.title, font=dict(size=16)),
                            showlegend=False,
                            hovermode='closest',
                            margin=dict(b=20, l=5, r=5, t=40),
                            xaxis=dict(showgrid=False, zeroline=False, showticklabels=False),
                            yaxis=dict(showgrid=False, zeroline=False, showticklabels=False),
                            template=self.template
                        ))
        return fig
