from abc import ABC, abstractmethod
from pathlib import Path


class BaseDiagram(ABC):
    """Abstract base class for all diagram generators."""
    def __init__(self, data, title, settings):
        self.data = data
        self.title = title
        self.settings = settings
        self.template = self.settings.get("diagrams", {}).get("plotly_template", "plotly_white")

    @abstractmethod
    def generate(self):
        """Return a plotly Figure, or None when there is nothing to draw."""
        pass

    def save(self, figure, out_dir, filename):
        if figure is None:
            return None
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        file_path = out_dir / f"{filename}.html"
        figure.write_html(file_path, full_html=False, include_plotlyjs='cdn')
        print(f"Saved interactive diagram: {file_path}")
        return file_path
