from src.visualization.plots import PlatformPlots
